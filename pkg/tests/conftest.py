"""Shared fixtures: the model corpus and small helpers.

The corpus covers every innovation family and every dependence kind.  The
first six members keep their tail mass under the 1/(150 kappa) gate the
lemma suites require; the pareto member deliberately violates it so the
gating paths stay exercised.
"""

import numpy as np
import pytest

import selfnorm as sn

CORPUS_SEED = 7


def _corpus():
    rad = sn.InnovationSpec("rademacher")
    return [
        ("iid-rademacher", sn.iid_model(100, rad, label="iid-rademacher")),
        ("iid-uniform",
         sn.iid_model(200, sn.InnovationSpec("uniform_centered"), label="iid-uniform")),
        ("iid-two-point",
         sn.iid_model(300, sn.InnovationSpec("two_point_asymmetric", p=0.3),
                      label="iid-two-point")),
        ("ma-rademacher",
         sn.moving_average_model([200], 1, [1.0, 1.0, 1.0], rad, label="ma-rademacher")),
        ("cycle-rademacher",
         sn.edge_sum_model(sn.cycle_edges(100), 100, rad, label="cycle-rademacher")),
        ("iid-exponential",
         sn.iid_model(400, sn.InnovationSpec("exponential_centered"),
                      label="iid-exponential")),
        ("iid-pareto",
         sn.iid_model(800, sn.InnovationSpec("pareto_centered", alpha=4.5),
                      label="iid-pareto")),
    ]


@pytest.fixture(scope="session")
def corpus():
    """All seven corpus models as (name, model) pairs."""
    return _corpus()


@pytest.fixture(scope="session")
def gated_corpus(corpus):
    """The corpus members whose beta2 satisfies the lemma gate."""
    out = []
    for name, model in corpus:
        c = sn.compute_components(model)
        if c.beta2 <= 1.0 / (150.0 * c.kappa):
            out.append((name, model))
    assert len(out) >= 6
    return out


@pytest.fixture(scope="session")
def heavy_model(corpus):
    """The pareto member, the one that fails the beta2 gate."""
    return dict(corpus)["iid-pareto"]


def brute_force_sigma2(model, replications=20000, seed=123):
    """MC variance of S, for cross-checking exact_sigma2."""
    from selfnorm.montecarlo import realization_block

    sums = []
    block = 0
    while sum(len(s) for s in sums) < replications:
        sums.append(realization_block(model, seed=seed, block=block).sum(axis=1))
        block += 1
    s = np.concatenate(sums)[:replications]
    return float(s.var(ddof=1))
