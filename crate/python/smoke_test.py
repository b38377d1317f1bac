"""Smoke test for the solcon_py extension module.

Run after `maturin develop -m crates/py/Cargo.toml` or
`cargo build -p solcon-py --release --features extension-module`; in the
latter case the freshly built library under target/ is loaded directly.
"""

import importlib.machinery
import importlib.util
import json
import pathlib
import sys


def load():
    try:
        import solcon_py

        return solcon_py
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        lib = root / "target" / profile / "libsolcon_py.so"
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("solcon_py", str(lib))
            spec = importlib.util.spec_from_file_location("solcon_py", lib, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("solcon_py not found; build it first")


def main():
    sc = load()

    cfg = sc.RunConfig.builtin("enzyme")
    times, states = sc.integrate(cfg)
    assert len(times) == cfg.m + 1 and states[0] == [1.0, 0.0, 1.0, 1.0]
    drift = max(abs(s[0] + s[1] - 1.0) for s in states)
    assert drift < 1e-8, drift

    report = sc.find_constraints(cfg)
    assert report.pivot_indices == [0, 1, 3] and report.free_indices == [2, 4]
    basic0 = dict(report.general_solution[0][1])
    assert abs(basic0[2] + 1) < 1e-6 and abs(basic0[4] + 3) < 1e-6
    assert "xi_1 = (-1)*xi_3+(-3)*xi_5" in report.to_text()
    assert all(passed for _, _, passed in sc.verify(report, refine=2))

    again = sc.ConstraintReport.from_json(report.to_json())
    assert again.basis_vectors == report.basis_vectors

    gly = sc.RunConfig.builtin("glycolytic")
    try:
        sc.find_constraints(gly, seed=1)
        raise AssertionError("expected NoConstraintsError")
    except sc.NoConstraintsError:
        pass

    custom = sc.RunConfig.from_json(json.dumps({
        "variables": ["x", "y"],
        "equations": ["y", "-x"],
        "initial": [1, 0],
        "T": 6.0,
        "m": 200,
        "library": {"powers": [0, 2]},
    }))
    circle = sc.find_constraints(custom)
    assert len(circle.basis_vectors) == 1, circle

    assert sc.generate_monomial_exponents(2, 2) == [[2, 0], [1, 1], [0, 2]]
    r, pivots, _ = sc.rref([[1.0, 2.0], [2.0, 4.0]])
    assert pivots == [0] and r[0] == [1.0, 2.0]
    assert len(sc.nullspace([[1.0, 1.0]])) == 1
    assert sc.evaluate("x^2 + sin(t)", ["x"], [3.0]) == 9.0

    print("solcon_py smoke test passed:", report)


if __name__ == "__main__":
    main()
