import json
import math

import numpy as np
import pytest

from activeht import (
    Environment,
    IdentifiabilityError,
    MalformedDocumentError,
    kl,
    load_environment,
    log_density,
    preset_environment,
    sample_observation,
)


def test_skewed_preset_matches_published_matrix(skewed):
    assert skewed.num_hypotheses == 5
    assert skewed.num_actions == 5
    assert skewed.sigma == 1.0
    assert skewed.means[0] == (0.5, 0.9, 0.5, 0.3, 0.7)


def test_identical_columns_rejected():
    doc = {"name": "bad", "means": [[0.3, 0.3], [0.7, 0.7]]}
    with pytest.raises(IdentifiabilityError):
        load_environment(doc)


def test_degenerate_preset_loads_with_one_collapsed_pair(degenerate):
    # Rows 3 and 4 (1-indexed) are fully uninformative, and hypotheses 3 and
    # 4 share every column entry: they are mutually indistinguishable while
    # every other pair still differs under some action.
    assert degenerate.means[2] == (0.5,) * 5
    assert degenerate.means[3] == (0.5,) * 5
    assert degenerate.indistinguishable_pairs() == [(3, 4)]
    maxd = degenerate.max_divergence
    for h in range(5):
        for g in range(h + 1, 5):
            if (h, g) != (3, 4):
                assert maxd[h][g] > 0


def test_strict_flag_controls_collapsed_pair_documents(degenerate):
    doc = {"name": "copy", "means": [list(r) for r in degenerate.means]}
    with pytest.raises(IdentifiabilityError):
        load_environment(doc)
    env = load_environment(doc, strict=False)
    assert env.indistinguishable_pairs() == [(3, 4)]


def test_fully_indistinct_hypothesis_rejected_even_relaxed():
    doc = {"name": "worse", "means": [[0.5, 0.5, 0.5], [0.2, 0.2, 0.2]]}
    with pytest.raises(IdentifiabilityError):
        load_environment(doc, strict=False)


@pytest.mark.parametrize("doc", [
    {"name": "x"},
    {"name": "x", "means": [[0.1, 0.2], [0.3]]},
    {"name": "x", "means": "nope"},
    {"name": "x", "means": [[0.1, 0.2]], "sigma": 0.0},
    {"name": "x", "means": [[0.1, 0.2]], "sigma": -1.0},
    {"name": "x", "means": [[0.1, 0.2], [0.2, 0.1]], "num_actions": 3},
])
def test_malformed_documents_rejected(doc):
    with pytest.raises(MalformedDocumentError):
        load_environment(doc)


def test_load_sources(tmp_path, skewed):
    path = tmp_path / "env.json"
    doc = {"name": "filecopy", "means": [list(r) for r in skewed.means], "sigma": 2.0}
    path.write_text(json.dumps(doc))
    from_file = load_environment(path)
    assert from_file.sigma == 2.0
    assert from_file.means == skewed.means

    from_text = load_environment(json.dumps(doc))
    assert from_text == from_file

    assert load_environment(skewed) is skewed
    with pytest.raises(MalformedDocumentError):
        load_environment("no-such-preset-or-file")
    with pytest.raises(MalformedDocumentError):
        load_environment("{not json")


def test_unknown_preset_lists_choices():
    with pytest.raises(MalformedDocumentError, match="degenerate"):
        preset_environment("typo")


def test_kl_closed_form(skewed):
    assert kl(skewed, 0, 0, 1) == pytest.approx(0.08, abs=1e-15)
    assert kl(skewed, 2, 0, 0) == 0.0
    # sigma scales the divergence by 1/sigma^2
    half = Environment(name="s", means=skewed.means, sigma=2.0)
    assert kl(half, 0, 0, 1) == pytest.approx(0.02, abs=1e-15)


def test_kl_degenerate_row_is_zero(degenerate):
    for h in range(5):
        for g in range(5):
            assert kl(degenerate, 2, h, g) == 0.0


def test_kl_table_invariants(skewed, hard_weak, degenerate):
    rng = np.random.default_rng(0)
    envs = [skewed, hard_weak, degenerate]
    for _ in range(5):
        means = rng.uniform(-1, 1, size=(rng.integers(1, 5), rng.integers(2, 6)))
        envs.append(Environment(name="r", means=tuple(map(tuple, means)),
                                sigma=float(rng.uniform(0.5, 2.0))))
    for env in envs:
        table = env.kl_table.values
        assert table.shape == (env.num_actions, env.num_hypotheses, env.num_hypotheses)
        assert (table >= 0).all()
        for a in range(env.num_actions):
            assert np.array_equal(np.diag(table[a]), np.zeros(env.num_hypotheses))
            assert np.array_equal(table[a], table[a].T)
        for a in range(env.num_actions):
            for h in range(env.num_hypotheses):
                for g in range(env.num_hypotheses):
                    assert table[a, h, g] == kl(env, a, h, g)


def test_log_density_drops_constant(skewed):
    mu = skewed.means[1][2]
    assert log_density(skewed, 1, 2, mu) == 0.0
    assert log_density(skewed, 1, 2, mu + 1.0) == pytest.approx(-0.5, abs=1e-15)
    with pytest.raises(ValueError):
        log_density(skewed, 1, 2, float("nan"))
    with pytest.raises(IndexError):
        log_density(skewed, 9, 2, 0.0)


def test_log_density_differences_match_full_gaussian_llr(skewed):
    def full_logpdf(env, a, h, o):
        var = env.sigma**2
        return -0.5 * (o - env.means[a][h]) ** 2 / var - math.log(env.sigma * math.sqrt(2 * math.pi))

    rng = np.random.default_rng(7)
    env = Environment(name="s", means=skewed.means, sigma=1.7)
    for _ in range(200):
        a = int(rng.integers(env.num_actions))
        h, g = rng.choice(env.num_hypotheses, size=2, replace=False)
        o = float(rng.normal(0, 3))
        ours = log_density(env, a, int(h), o) - log_density(env, a, int(g), o)
        exact = full_logpdf(env, a, int(h), o) - full_logpdf(env, a, int(g), o)
        assert ours == pytest.approx(exact, abs=1e-12)


def test_sampling_is_deterministic_and_consumes_one_draw(skewed):
    o1 = sample_observation(skewed, 2, 4, np.random.default_rng(99))
    o2 = sample_observation(skewed, 2, 4, np.random.default_rng(99))
    assert o1 == o2
    rng_a = np.random.default_rng(123)
    rng_b = np.random.default_rng(123)
    draw = sample_observation(skewed, 0, 1, rng_a)
    z = rng_b.standard_normal()
    assert draw == skewed.means[0][1] + skewed.sigma * z
    # the generator advanced by exactly one unit: next draws agree
    assert rng_a.standard_normal() == rng_b.standard_normal()


def test_sampling_moments(skewed):
    rng = np.random.default_rng(2024)
    draws = np.array([sample_observation(skewed, 0, 0, rng) for _ in range(100_000)])
    assert abs(draws.mean() - 0.5) < 0.02
    assert abs(draws.var() - 1.0) < 0.03


def test_environment_is_immutable(skewed):
    with pytest.raises(Exception):
        skewed.sigma = 2.0
    assert not skewed.means_array.flags.writeable
