"""Quick end-to-end check of the Python bindings.

Build and install first (see README): maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/pyoptomech-*.whl
"""

import math

import pyoptomech as om


def main():
    params = om.SystemParams.sensing(1)
    assert params.g == 4.0
    dims = (5, 10)

    record = om.sample_record(params, dims, t_end=20.0, seed=3)
    again = om.ClickRecord.from_jsonl(record.to_jsonl())
    assert again.detection_times == record.detection_times
    assert record.fingerprint == params.fingerprint()
    print(f"clicks in t=20: {len(record)}")

    photons, neg = om.replay(record, params, dims, [0.0, 10.0, 20.0])
    assert photons[0] == 0.0 and all(n >= 0.0 for n in neg)

    grid = om.g2(params, dims, [5.0], [0.0, 1.0])
    assert grid[0][0] > 0.0

    nodes, densities, means, variances = om.posterior(
        record, params, dims, "g", (2.0, 10.0, -1000.0), 9, [0.0, 20.0], workers=2
    )
    assert len(nodes) == 9 and len(densities) == 2
    assert 2.0 <= means[-1] <= 10.0 and variances[-1] > 0.0
    print(f"posterior mean of g after t=20: {means[-1]:.3f}")

    # Closed evolution of |1>|1> with k = 1: purity is 1 at t = 0 and at one mechanical period.
    p0 = om.analytic_purity(1.0, 1.0, 1.0, 0.0, 0.0)
    p1 = om.analytic_purity(1.0, 1.0, 1.0, 0.0, 2 * math.pi)
    assert abs(p0 - 1.0) < 1e-12 and abs(p1 - 1.0) < 1e-9
    assert om.analytic_purity(1.0, 1.0, 1.0, 0.0, math.pi) < 0.9

    try:
        om.SystemParams(delta=0, omega_m=1, g=1, omega_drive=0, kappa_d=-1, kappa_l=0, gamma=0, mbar=0)
    except ValueError as e:
        assert "kappa_d" in str(e)
    else:
        raise AssertionError("negative kappa_d accepted")
    print("ok")


if __name__ == "__main__":
    main()
