import json
import random

import pytest

from regforge import parse_spec


def make_spec_doc(
    n_slaves=2,
    regs_per_slave=4,
    width=32,
    topology="distributed",
    data_width=32,
    addr_width=8,
    stride=None,
    global_depth=0,
    global_width=0,
    sync_length=2,
    periods=(10_000, 7_000),
):
    """Build a well-formed spec document as a plain dict."""
    stride = stride if stride is not None else max(regs_per_slave, 1)
    domains = [{"name": f"clk{i}", "period_ps": p} for i, p in enumerate(periods)]
    slaves = []
    for k in range(n_slaves):
        slaves.append(
            {
                "name": f"slave{k}",
                "clock_domain": domains[min(1, len(domains) - 1)]["name"],
                "base_addr": k * stride,
                "registers": [
                    {"name": f"r{i}", "offset": i, "width": width, "reset_value": 0}
                    for i in range(regs_per_slave)
                ],
            }
        )
    return {
        "name": "testdes",
        "bus": {
            "data_width": data_width,
            "addr_width": addr_width,
            "slave_select_bits": max((n_slaves - 1).bit_length(), 0),
        },
        "clock_domains": domains,
        "slaves": slaves,
        "architecture": {
            "topology": topology,
            "sync_length": sync_length,
            "global_depth": global_depth,
            "global_width": global_width,
        },
    }


def make_spec(**kwargs):
    return parse_spec(json.dumps(make_spec_doc(**kwargs)))


@pytest.fixture
def distributed_spec():
    return make_spec()


@pytest.fixture
def rng():
    return random.Random(20240809)
