"""Smoke test for the pyepithreshold extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o target/wheels
    pip install target/wheels/pyepithreshold-*.whl
"""

import math
import pathlib

import pyepithreshold as ep

ROOT = pathlib.Path(__file__).resolve().parent.parent


def check(name, ok, detail=""):
    print(f"{'ok' if ok else 'FAILED'}  {name} {detail}")
    if not ok:
        raise SystemExit(1)


s = ep.final_size(2.0, 1.0, 1.0, 1e-6)
check("final_size", abs(s - 0.2031878) < 1e-6, s)
check("r0", ep.basic_reproduction_number(2.0, 1.0, 1.0) == 2.0)

samples, s_inf, drift = ep.simulate_sir(2.0, 1.0, 1.0, 1e-6)
check("simulate_sir", abs(s_inf - s) < 1e-6 and drift < 1e-8, (s_inf, drift))

gap = ep.neumann_gap(1.0, 256, 1.0)
check("neumann_gap", abs(gap - math.pi**2) < 1e-3 * math.pi**2, gap)

flat = ep.Scenario.homogeneous(64, 2.0, 1.0, 1.0, 1e-3)
lam, phi = flat.eigen()
check("eigen", abs(lam + 1.0) < 1e-10 and min(phi) > 0, lam)
check("classify", flat.classify()["classification"] == "Propagates")

bump = ep.Scenario.from_file(str(ROOT / "scenarios" / "bump.toml"))
report = bump.critical_diffusivity()
d_star = report["d_star"]
check("critical_diffusivity", abs(report["lambda_at"]) < 1e-8, d_star)
check("sign below d*", bump.lambda1_of_di(d_star / 4) < 0)
check("sign above d*", bump.lambda1_of_di(4 * d_star) > 0)

text = (ROOT / "scenarios" / "cosine_i0.toml").read_text()
cos = ep.Scenario.from_toml(text)
check("hash stable", cos.hash() == ep.Scenario.from_toml(cos.to_toml()).hash())
coarse = ep.Scenario.from_toml(text.replace("cells = [256]", "cells = [64]"))
run = coarse.simulate()
check("simulate", run["reason"] == "converged" and run["invariants_clean"], run["s_infinity"])
rows = coarse.compare([1.0], levels=2)
check("compare", rows[0][3] > 0, rows[0])

try:
    ep.final_size(-1.0, 1.0, 1.0, 0.0)
except ep.EpithresholdError as e:
    check("error mapping", "exit code" in str(e), e)
else:
    check("error mapping", False)

print("smoke test passed")
