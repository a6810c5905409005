"""Acceptance suite: twelve end-to-end criteria, one test each.

Every test prints its measured quantities next to the stated tolerance, so
`pytest -v` yields one pass/fail line per criterion with the evidence one
`-s` away.  Seeds are pinned; worker counts never affect any number.
"""

import hashlib
import json
import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

import selfnorm as sn
from selfnorm.cli import calibrate_constant, run as cli_run

RAD = sn.InnovationSpec("rademacher")
SUITE_SEED = 7
SUITE_R = 100_000
WORKERS = 4


def sweep_records(model_factory, sizes, replications, seed, statistic="W"):
    records = []
    for n in sizes:
        e = sn.run_experiment(model_factory(n), statistic,
                              replications=replications, seed=seed, workers=WORKERS)
        records.append(sn.ExperimentRecord(
            n=n, replications=replications, seed=seed,
            ks_estimate=sn.ks_distance_vs_normal(e),
            dkw_band=sn.dkw_band(replications),
            bound_value=None, statistic_kind=statistic))
    return records


def fitted(records):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # noise-floor exclusions are expected
        return sn.rate_fit(records)


def test_criterion_01_iid_rate():
    start = time.time()
    records = sweep_records(lambda n: sn.iid_model(n, RAD),
                            [64, 128, 256, 512, 1024, 2048, 4096],
                            replications=20_000, seed=3)
    fit = fitted(records)
    elapsed = time.time() - start
    print(f"criterion 1: slope={fit.slope:.4f} (need [-0.65,-0.35]) "
          f"r2={fit.r_squared:.4f} (need >=0.9) used={fit.used_sizes} "
          f"elapsed={elapsed:.1f}s (need <=180)")
    assert -0.65 <= fit.slope <= -0.35
    assert fit.r_squared >= 0.9
    assert elapsed <= 180.0


def test_criterion_02_moving_average_rate():
    exp = sn.InnovationSpec("exponential_centered")
    records = sweep_records(
        lambda n: sn.moving_average_model([n], 1, [1.0, 1.0, 1.0], exp),
        [64, 128, 256, 512, 1024, 2048, 4096], replications=20_000, seed=3)
    fit = fitted(records)
    print(f"criterion 2: slope={fit.slope:.4f} (need [-0.7,-0.3]) "
          f"used={fit.used_sizes}")
    assert -0.7 <= fit.slope <= -0.3


def test_criterion_03_cycle_rate():
    records = sweep_records(
        lambda n: sn.edge_sum_model(sn.cycle_edges(n), n, RAD),
        [128, 256, 512, 1024, 2048, 4096], replications=20_000, seed=2)
    fit = fitted(records)
    print(f"criterion 3: slope={fit.slope:.4f} (need [-0.7,-0.3]) "
          f"used={fit.used_sizes}")
    assert -0.7 <= fit.slope <= -0.3


def test_criterion_04_exact_vs_monte_carlo():
    R = 1_000_000
    band = sn.dkw_band(R)
    worst = 0.0
    cases = [(n, sn.iid_model(n, RAD)) for n in range(2, 13)]
    cases += [(n, sn.moving_average_model([n], 1, [1.0, 1.0, 1.0], RAD))
              for n in range(4, 15)]
    for n, model in cases:
        exact = sn.exact_distribution_small(model, "W")
        e = sn.run_experiment(model, "W", replications=R, seed=11, workers=WORKERS)
        gap = abs(exact - sn.ks_distance_vs_normal(e))
        worst = max(worst, gap)
        assert gap <= band, (model.kind, n, gap, band)
    print(f"criterion 4: worst |exact-MC| gap={worst:.6f} (need <= {band:.6f}) "
          f"over {len(cases)} models")


def test_criterion_05_censored_variance_suite(gated_corpus):
    assert len(gated_corpus) >= 6
    for name, model in gated_corpus:
        reports = sn.lemma_oracle_41(model, replications=SUITE_R,
                                     seed=SUITE_SEED, workers=WORKERS)
        for rep in reports:
            assert rep.applicable, (name, rep.name)
            assert rep.passed, (name, rep.name, rep.lhs, rep.rhs)
        print(f"criterion 5: {name}: all four censored-variance checks hold")


def test_criterion_06_fourth_moment_suite(gated_corpus):
    for name, model in gated_corpus:
        reports = sn.lemma_oracle_43(model, replications=SUITE_R,
                                     seed=SUITE_SEED, workers=WORKERS)
        for rep in reports:
            assert rep.applicable and rep.passed, (name, rep.name)
        print(f"criterion 6: {name}: fourth-moment bounds hold")

    # Analytic anchor: unit rademacher sites give E S^4 = 3n^2 - 2n.
    n = 100
    base = next(r for r in sn.lemma_oracle_43(sn.iid_model(n, RAD),
                                              replications=SUITE_R,
                                              seed=SUITE_SEED, workers=WORKERS)
                if r.name == "censored-sum-fourth-moment")
    analytic = 3.0 * n**2 - 2.0 * n
    assert base.ci[0] <= analytic <= base.ci[1]
    assert analytic <= base.rhs
    assert base.rhs == pytest.approx(1161.0 * 2.0 * n**2, rel=1e-12)
    print(f"criterion 6: analytic E S^4 = {analytic:.0f} inside MC CI "
          f"({base.ci[0]:.0f}, {base.ci[1]:.0f}), bound {base.rhs:.0f}")


def test_criterion_07_decoupling_suite(gated_corpus):
    for name, model in gated_corpus:
        rep = sn.lemma_oracle_42(model, test_function="clip",
                                 replications=SUITE_R, seed=SUITE_SEED,
                                 workers=WORKERS)
        assert rep.applicable and rep.passed, (name, rep.lhs, rep.rhs)
        print(f"criterion 7: {name}: clip decoupling holds "
              f"(ci upper {rep.ci[1]:.4f} <= {rep.rhs:.4f})")

    symmetric = ("iid-rademacher", "iid-uniform", "ma-rademacher", "cycle-rademacher")
    models = dict(gated_corpus)
    for name in symmetric:
        rep = sn.lemma_oracle_42(models[name], test_function="sin",
                                 replications=SUITE_R, seed=SUITE_SEED,
                                 workers=WORKERS)
        assert rep.ci[0] == 0.0, (name, rep.ci)
        print(f"criterion 7: {name}: odd test function indistinguishable from 0")


def test_criterion_08_truncation_gap(corpus):
    for name, model in corpus:
        rep = sn.truncation_gap_check(model, replications=SUITE_R,
                                      seed=SUITE_SEED, workers=WORKERS)
        assert rep.applicable and rep.passed, (name, rep.lhs, rep.rhs)
        vacuous = " (vacuous bound)" if "vacuous" in rep.note else ""
        print(f"criterion 8: {name}: gap {rep.lhs:.5f} <= bound {rep.rhs:.5f}"
              f"{vacuous}")


def test_criterion_09_remark_inequalities(corpus):
    for name, model in corpus:
        c = sn.compute_components(model)
        for rep in sn.remark_inequalities(c):
            assert rep.applicable, (name, rep.name)
            assert rep.passed, (name, rep.name, rep.lhs, rep.rhs)
            print(f"criterion 9: {name}: {rep.name}: "
                  f"{rep.lhs:.6g} <= {rep.rhs:.6g}")


def test_criterion_10_invariants():
    rng = np.random.default_rng(0)
    xs = rng.uniform(-1e8, 1e8, 10_000)
    sigmas = 10.0 ** rng.uniform(-4, 4, 10_000)
    values = np.array([sn.psi(x, s) for x, s in zip(xs, sigmas)])
    assert np.all(values >= 0.5 * sigmas - 1e-15 * sigmas)
    assert np.all(values <= math.sqrt(2.0) * sigmas * (1.0 + 1e-15))
    print("criterion 10: psi inside [sigma/2, sqrt(2) sigma] on 10000 inputs")

    for d in (1, 2):
        for m in (0, 1, 2):
            side = max(6 * m + 1, 7)
            s = sn.build_lattice_structure([side] * d, m)
            assert sn.neighborhood_stats(s).kappa == (6 * m + 1) ** d, (d, m)
    print("criterion 10: kappa = (6m+1)^d on lattices, d in {1,2}, m in {0,1,2}")

    worst = 0.0
    structures = [
        sn.build_lattice_structure([50], 0),
        sn.build_lattice_structure([30], 1),
        sn.build_graph_structure(sn.cycle_edges(40), 40),
    ]
    for structure in structures:
        for trial in range(200):
            x = rng.standard_normal(structure.size) * 10.0 ** rng.integers(-2, 3)
            w = sn.compute_statistics(x, structure).w
            if not math.isfinite(w):
                continue
            for c in (1e-6, 1.0, 1e6):
                wc = sn.compute_statistics(c * x, structure).w
                worst = max(worst, abs(wc - w) / (1.0 + abs(w)))
    assert worst <= 1e-12
    print(f"criterion 10: W scale deviation {worst:.3e} <= 1e-12 "
          f"over 600 realizations x 3 scales")


def test_criterion_11_determinism_and_cdf_oracle(tmp_path):
    config = tmp_path / "exp.ini"
    config.write_text(
        "[model]\n"
        "kind = iid\n"
        "family = rademacher\n"
        "label = determinism\n"
        "\n"
        "[experiment]\n"
        "statistic = W\n"
        "sweep = 64, 128, 256\n"
        "replications = 20000\n"
        "seed = 42\n"
    )
    digests = set()
    for w in (1, 4, 16):
        out = tmp_path / f"workers{w}"
        out.mkdir()
        code = cli_run(config, suite="simulate", out_dir=out, workers=w)
        assert code == 0
        digests.add(hashlib.sha256((out / "results.csv").read_bytes()).hexdigest())
    assert len(digests) == 1
    print(f"criterion 11: identical results.csv for workers 1, 4, 16 "
          f"(sha256 {next(iter(digests))[:16]}...)")

    payload = json.loads(
        (Path(__file__).parent / "data" / "phi_oracle.json").read_text())
    worst = 0.0
    for point in payload["points"]:
        want = float(point["phi"])
        got = sn.normal_cdf(float(point["z"]))
        worst = max(worst, abs(got - want) / want)
    assert len(payload["points"]) == 200
    assert worst <= 1e-13
    print(f"criterion 11: normal cdf within {worst:.2e} relative "
          f"of 200 high-precision checkpoints")


def test_criterion_12_calibration(corpus):
    # Report-only: find the smallest constant making every theorem bound
    # dominate its observed KS distance.  Distinct seeds per model keep the
    # runs independent.
    R = 20_000
    runs = []
    for index, (name, model) in enumerate(corpus):
        seed = 101 + index
        e = sn.run_experiment(model, "W", replications=R, seed=seed, workers=WORKERS)
        record = sn.ExperimentRecord(
            n=model.structure.size, replications=R, seed=seed,
            ks_estimate=sn.ks_distance_vs_normal(e), dkw_band=sn.dkw_band(R),
            bound_value=None, statistic_kind="W")
        c = sn.compute_components(model)
        if model.kind == "moving-average":
            rhs1 = sn.theorem2_rhs(c.gamma, 2 * model.r, len(model.dims),
                                   c.size_j, 1.0)
        elif model.kind == "graph-edge-sum":
            rhs1 = sn.theorem3_rhs(c.gamma, c.kappa1, c.size_j, 1.0)
        else:
            rhs1 = sn.theorem1_rhs(c, c.size_j, 1.0)
        runs.append((record, rhs1))
        ratio = (record.ks_estimate + record.dkw_band) / rhs1
        print(f"criterion 12: {name}: (ks+dkw)/bound(1) = {ratio:.5f}")

    constant = calibrate_constant(runs)
    print(f"criterion 12: smallest admissible constant C = {constant:.5f}")
    assert math.isfinite(constant) and constant > 0.0
