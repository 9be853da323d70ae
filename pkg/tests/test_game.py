"""Config validation, type enumeration, and posterior arithmetic."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import disclosure_eq as d
from disclosure_eq.game import max_types_cap, type_probs_and_means


def base_config() -> dict:
    return {
        "states": [{"value": 0.0, "prior": 0.5}, {"value": 1.0, "prior": 0.5}],
        "outcomes": [[0.5, 0.5], [0.2, 0.8]],
        "mass": {"finite": {"N": 2, "pmf": [0.2, 0.3, 0.5]}},
    }


# ---------------------------------------------------------------------------
# validate_game: happy paths


def test_validate_finite_roundtrip():
    game = d.validate_game(base_config())
    assert game.kind == "finite"
    assert game.J == 2 and game.D == 2
    assert game.states.values == (0.0, 1.0)
    assert game.mass.N == 2
    assert game.mass.support == (0, 1, 2)
    assert math.isclose(game.state_mean(), 0.5)


def test_validate_limit_roundtrip(ex1a_cfg):
    game = d.validate_game(ex1a_cfg)
    assert game.kind == "limit"
    assert game.J == 2 and game.D == 4
    assert game.mass(1.0) == pytest.approx(0.0)


def test_load_game_from_path(tmp_path):
    p = tmp_path / "g.json"
    p.write_text(json.dumps(base_config()))
    game = d.load_game(p)
    assert game.kind == "finite"


# ---------------------------------------------------------------------------
# validate_game: every documented error path names the offending field


@pytest.mark.parametrize("mutate, field", [
    (lambda c: c.pop("states"), "states"),
    (lambda c: c["states"].pop(1), "states"),  # single state is allowed? no: values need >=1; removing one leaves 1 state but priors!=1
    (lambda c: c["states"][0].update(value="x"), "states[0]"),
    (lambda c: c["states"][0].update(value=2.0), "states[1].value"),
    (lambda c: c["states"][1].update(prior=0.0), "states[1].prior"),
    (lambda c: c["states"][1].update(prior=0.7), "states"),
    (lambda c: c.pop("outcomes"), "outcomes"),
    (lambda c: c["outcomes"].pop(1), "outcomes"),
    (lambda c: c["outcomes"][1].pop(1), "outcomes[1]"),
    (lambda c: c["outcomes"][1].__setitem__(0, -0.2), "outcomes[1]"),
    (lambda c: c["outcomes"][1].__setitem__(0, 0.5), "outcomes[1]"),
    (lambda c: c.pop("mass"), "mass"),
    (lambda c: c.__setitem__("mass", {}), "mass"),
    (lambda c: c["mass"]["finite"].update(N=0, pmf=[1.0]), "mass.finite.N"),
    (lambda c: c["mass"]["finite"].update(pmf=[0.5, 0.5]), "mass.finite.pmf"),
    (lambda c: c["mass"]["finite"].update(pmf=[0.2, 0.3, -0.5]),
     "mass.finite.pmf"),
])
def test_validate_rejects_bad_configs(mutate, field):
    cfg = base_config()
    mutate(cfg)
    with pytest.raises(d.GameValidationError) as exc:
        d.validate_game(cfg)
    assert str(exc.value).startswith(field), str(exc.value)


def test_validate_rejects_bad_density():
    cfg = base_config()
    cfg["mass"] = {"density": {"pieces": [
        {"interval": [0.0, 1.0], "coeffs": [1.0]}]}}  # uniform: g(1) != 0
    with pytest.raises(d.GameValidationError) as exc:
        d.validate_game(cfg)
    assert str(exc.value).startswith("mass.density")
    assert "vanish" in str(exc.value)


def test_validate_rejects_both_mass_kinds():
    cfg = base_config()
    cfg["mass"]["density"] = "triangular"
    with pytest.raises(d.GameValidationError) as exc:
        d.validate_game(cfg)
    assert str(exc.value).startswith("mass")


# ---------------------------------------------------------------------------
# Types, subsets, probabilities


def test_enumerate_types_counts():
    game = d.validate_game(base_config())
    types = d.enumerate_types(game)
    # sizes 0,1,2 over two outcome kinds: 1 + 2 + 3 count vectors
    assert len(types) == 6
    assert types == sorted(types)
    assert (0, 0) in types and (2, 0) in types and (1, 1) in types


def test_enumerate_types_honours_cap(monkeypatch):
    game = d.validate_game(base_config())
    with pytest.raises(d.GameValidationError) as exc:
        d.enumerate_types(game, cap=3)
    assert "exceeds cap" in str(exc.value)
    monkeypatch.setenv("DISCLOSURE_EQ_MAX_TYPES", "3")
    assert max_types_cap() == 3
    with pytest.raises(d.GameValidationError):
        d.enumerate_types(game)
    monkeypatch.setenv("DISCLOSURE_EQ_MAX_TYPES", "1000")
    assert len(d.enumerate_types(game)) == 6


def test_is_subset():
    assert d.is_subset((0, 1), (1, 1))
    assert d.is_subset((0, 0), (0, 0))
    assert not d.is_subset((2, 0), (1, 3))
    with pytest.raises(d.GameValidationError):
        d.is_subset((1,), (1, 2))


def test_type_probs_sum_to_one():
    game = d.validate_game(base_config())
    types = d.enumerate_types(game)
    total = sum(d.type_prob(game, t) for t in types)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_type_posterior_matches_direct_bayes():
    game = d.validate_game(base_config())
    # dataset (0, 2): two draws of the second outcome kind
    post = d.type_posterior(game, (0, 2))
    lik = np.array([0.5 ** 2, 0.8 ** 2]) * 0.5
    assert post == pytest.approx(lik / lik.sum(), abs=1e-12)
    assert post.sum() == pytest.approx(1.0)
    mean = d.expected_state(post, game.states)
    assert mean == pytest.approx(post[1], abs=1e-12)  # values are (0, 1)


def test_type_probs_and_means_vectorized_consistency():
    game = d.validate_game(base_config())
    types = d.enumerate_types(game)
    tmat = np.asarray(types, dtype=np.int64)
    q, means = type_probs_and_means(game, tmat)
    for i, t in enumerate(types):
        assert q[i] == pytest.approx(d.type_prob(game, t), abs=1e-14)
        post = d.type_posterior(game, t)
        assert means[i] == pytest.approx(
            d.expected_state(post, game.states), abs=1e-12)


def test_full_info_outcome_values():
    game = d.validate_game(base_config())
    full = d.full_info_outcome(game)
    for t, v in full.items():
        assert v == pytest.approx(
            d.expected_state(d.type_posterior(game, t), game.states))


# ---------------------------------------------------------------------------
# Imitation ratios


def test_imitation_ratio_dye(dye_cfg):
    game = d.validate_game(dye_cfg)
    assert d.imitation_ratio(game, 0, 0) == 1.0
    # rows are orthogonal indicators: no state can fake the other's data
    assert math.isinf(d.imitation_ratio(game, 0, 1))
    assert math.isinf(d.imitation_ratio(game, 1, 0))


def test_imitation_ratio_base():
    game = d.validate_game(base_config())
    assert d.imitation_ratio(game, 0, 1) == pytest.approx(0.8 / 0.5)
    assert d.imitation_ratio(game, 1, 0) == pytest.approx(0.5 / 0.2)


@st.composite
def frequency_rows(draw):
    D = draw(st.integers(1, 4))
    J = draw(st.integers(2, 3))
    rows = []
    weight = st.one_of(st.just(0.0), st.floats(1e-3, 1.0))
    for _ in range(J):
        w = draw(st.lists(weight, min_size=D, max_size=D))
        s = sum(w)
        rows.append(tuple(x / s for x in w) if s > 0
                    else tuple(1.0 / D for _ in range(D)))
    return rows


@settings(max_examples=60, deadline=None)
@given(frequency_rows())
def test_imitation_matrix_properties(rows):
    J, D = len(rows), len(rows[0])
    cfg = {
        "states": [{"value": j / (J - 1), "prior": 1.0 / J} for j in range(J)],
        "outcomes": [list(r) for r in rows],
        "mass": {"finite": {"N": 1, "pmf": [0.5, 0.5]}},
    }
    game = d.validate_game(cfg)
    for j in range(J):
        assert d.imitation_ratio(game, j, j) == pytest.approx(1.0)
        for k in range(J):
            r = d.imitation_ratio(game, j, k)
            # r is the worst-case per-observation cost of faking state k
            for fd_j, fd_k in zip(rows[j], rows[k]):
                if fd_k > 0:
                    assert r >= fd_k / fd_j - 1e-12 if fd_j > 0 else math.isinf(r)
            # sub-multiplicative across a middleman state
            for l in range(J):
                rl = d.imitation_ratio(game, j, l)
                lk = d.imitation_ratio(game, l, k)
                if math.isfinite(rl) and math.isfinite(lk):
                    assert r <= rl * lk * (1 + 1e-12) + 1e-9
