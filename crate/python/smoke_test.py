"""Smoke test for the noisykernel extension module.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""

import math

import noisykernel as nk


def main():
    kernel = nk.KernelSpec.gaussian(0.5)
    assert kernel.eval(0.0) == 1.0

    ds = nk.DataSet.sample(
        {"family": "circle_embed"},
        {"family": "gaussian_like", "sigma": {"kind": "identity"}},
        n=30,
        p=400,
        seed=11,
    )
    assert (ds.n, ds.p) == (30, 400)
    assert math.isclose(ds.nu, 1.0)

    m, outside = nk.kernel_matrix(ds, kernel)
    mt = nk.approx_matrix(ds, kernel)
    report = nk.compare_spectra(m, mt, [1, 2])
    assert report["weyl_ok"]
    assert report["op_gap"] <= report["frob_gap"] + 1e-12

    rescale = nk.gaussian_rescale_check(ds, 0.5)
    assert rescale["max_entry_dev"] < 1e-12

    values, vectors = nk.eigh(m)
    assert len(values) == 30 and len(vectors) == 30
    assert all(a >= b for a, b in zip(values, values[1:]))

    lap = nk.laplacian(m)
    assert all(abs(sum(row)) < 1e-12 for row in lap)

    identity = [[1.0 if i == j else 0.0 for j in range(10)] for i in range(10)]
    assert nk.pairdiff_variance(identity, mu4=3.0) == 80.0
    assert nk.quadform_second_moment([r[:3] for r in identity[:3]], kappa4=1.0) == 9.0
    assert float(nk.evaluate_oracle("pairdiff", sigma="identity:10", mu4=3)) == 80.0

    again = nk.DataSet.from_json(ds.to_json())
    assert again.x == ds.x

    config = {
        "name": "smoke",
        "signal": {"family": "circle_embed"},
        "noise": {"family": "sphere_uniform"},
        "kernel": {"family": "euclidean_distance", "func": {"kind": "gaussian", "s": 1.0}},
        "grid": [[20, 50], [20, 200], [20, 800]],
        "replications": 3,
        "base_seed": 1,
        "checks": ["frobenius_gap", "weyl"],
        "output": {"path": "unused.csv", "format": "csv"},
    }
    out = nk.run_experiment(config)
    assert len(out["records"]) == 9
    statuses = {c["check"]: c["status"] for c in out["aggregate"]["checks"]}
    assert statuses["weyl"] == "pass", statuses
    assert nk.run_experiment(config) == out

    try:
        nk.check_config(dict(config, bogus=1))
    except ValueError as e:
        assert "bogus" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
