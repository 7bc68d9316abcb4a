"""Smoke test for the dmolsim_py extension.

Build and install first, e.g.

    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
"""

import json
import math
import os
import sys
import tempfile

import dmolsim_py as dm


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    hw = dm.photon_energy_ev(515.0)
    assert close(hw, 2.407, 0.005), hw
    up = dm.ponderomotive_energy_ev(9e13, 515.0)
    assert close(up, 2.23, 0.05), up

    c, f = dm.correlation_and_fidelity(0.5, 0.0, "even")
    assert close(c, -1.0, 1e-12) and close(f, 1.0, 1e-12), (c, f)
    for a2, phi in [(0.2, 0.3), (0.7, -2.0), (1.0, 1.0)]:
        c, f = dm.correlation_and_fidelity(a2, phi, "odd")
        assert close(c, -2.0 * math.sqrt(a2 * (1 - a2)) * math.cos(phi), 1e-12)
        assert close(f - 0.5, -c / 2.0, 1e-12)

    h1 = dm.config_hash("schema_version = 1\n")
    h2 = dm.config_hash("schema_version = 1\n", ["laser.cep_rad=3.14159"])
    assert h1 != h2 and len(h1) == 64
    try:
        dm.config_hash("schema_version = 1\n[laser]\nbogus = 1\n")
    except ValueError as e:
        assert "bogus" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    passed, rows = dm.run_selftest(0)
    assert passed, [r for r in rows if not r[3]]
    assert {r[0] for r in rows} == {"propagator", "qubits", "holography"}

    with tempfile.TemporaryDirectory() as d:
        m = json.loads(dm.run_stage("holo", "schema_version = 1\n[holo]\np_step_au = 0.02\n", d))
        assert m["stage"] == "holo" and m["passed"]
        header, shape, data = dm.read_real_array(os.path.join(d, "pmd_sum.bin"))
        assert json.loads(header)["config_hash"] == m["config_hash"]
        assert len(data) == shape[0] * shape[1] and max(data) == 1.0

    print("dmolsim_py smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
