"""Flight sampler: determinism, contracts, and validation against exact laws."""

import io
import json
import math

import numpy as np
import pytest

from brownflight import (
    StepPolicy,
    beta_s,
    delta_beta_s,
    estimate_delta_regularity,
    read_records_jsonl,
    run_campaign,
    run_paths_from,
    sample_flight,
    write_records_jsonl,
)
from brownflight.errors import ConfigurationError
from brownflight.oracles import cube_survival

EPS = 2.0**-5


def record_key(rec):
    return json.dumps(rec.to_json_dict(), sort_keys=True)


def test_sample_flight_bit_identical(square_domain, square_dec8):
    a = sample_flight(square_domain, square_dec8, EPS, StepPolicy(), seed=42, flight_id=9)
    b = sample_flight(square_domain, square_dec8, EPS, StepPolicy(), seed=42, flight_id=9)
    assert record_key(a) == record_key(b)
    c = sample_flight(square_domain, square_dec8, EPS, StepPolicy(), seed=43, flight_id=9)
    assert record_key(a) != record_key(c)


def test_campaign_matches_individual_flights(square_domain, square_dec8):
    recs = run_campaign(square_domain, square_dec8, EPS, StepPolicy(), 5, master_seed=7)
    for i, rec in enumerate(recs):
        solo = sample_flight(square_domain, square_dec8, EPS, StepPolicy(), seed=7, flight_id=i)
        assert record_key(rec) == record_key(solo)


def test_campaign_worker_invariance(square_domain, square_dec8):
    one = run_campaign(square_domain, square_dec8, EPS, StepPolicy(), 64, master_seed=3, workers=1)
    two = run_campaign(square_domain, square_dec8, EPS, StepPolicy(), 64, master_seed=3, workers=2)
    assert [record_key(r) for r in one] == [record_key(r) for r in two]


def test_exit_points_on_boundary(square_domain, square_dec8):
    pol = StepPolicy()
    recs = run_campaign(square_domain, square_dec8, EPS, pol, 200, master_seed=5)
    delta_abs = pol.resolve(EPS, 0.5).delta_abs
    for r in recs:
        if not r.censored:
            assert abs(square_domain.signed_distance(r.exit_point)) <= delta_abs / 10.0
        assert r.tau > 0.0
        assert r.displacement >= 0.0


def test_shell_occupation_sums_to_tau(square_domain, square_dec8):
    recs = run_campaign(square_domain, square_dec8, EPS, StepPolicy(), 100, master_seed=11)
    for r in recs:
        total = sum(r.shell_occupation.values())
        assert abs(total - r.tau) <= 1e-9 * max(r.tau, 1.0)


def test_beta_s_accounting(square_domain, square_dec8):
    rec = sample_flight(square_domain, square_dec8, EPS, StepPolicy(), seed=2, flight_id=0)
    assert abs(beta_s(rec, 2.0) - rec.tau) <= 1e-9  # sausage wider than the domain
    assert beta_s(rec, 2.0**-9) <= rec.tau
    s = 2.0**-4
    assert abs(delta_beta_s(rec, s) - (beta_s(rec, s) - beta_s(rec, s / 2))) == 0.0


def test_start_cube_in_layer(square_domain, square_dec8):
    from brownflight import layer

    cubes = {(c.generation, c.index) for c in layer(square_dec8, square_domain, EPS)}
    recs = run_campaign(square_domain, square_dec8, EPS, StepPolicy(), 50, master_seed=19)
    for r in recs:
        assert (r.start_cube.generation, r.start_cube.index) in cubes
        np.testing.assert_allclose(r.start, r.start_cube.center)


def test_epsilon_preconditions(square_domain, square_dec8):
    with pytest.raises(ConfigurationError):
        run_campaign(square_domain, square_dec8, 2.0**-7, StepPolicy(), 1, 0)  # below 2^(mg+3)
    with pytest.raises(ConfigurationError):
        run_campaign(square_domain, square_dec8, 0.6, StepPolicy(), 1, 0)  # above R_Omega
    with pytest.raises(ConfigurationError):
        run_campaign(square_domain, square_dec8, EPS, StepPolicy(), 0, 0)


def test_policy_validation():
    with pytest.raises(ConfigurationError):
        StepPolicy(c_step=0.0)
    with pytest.raises(ConfigurationError):
        StepPolicy(c_step=1.5)
    with pytest.raises(ConfigurationError):
        StepPolicy(delta_abs=-1.0)
    pol = StepPolicy().resolve(0.01, 0.5)
    assert pol.dt_max == 0.5**2 / 100.0
    assert pol.delta_abs == 0.01 / 100.0
    assert pol.t_max == 4.0 * 0.25


def test_censoring_caps_tau(square_domain, square_dec8):
    pol = StepPolicy(t_max=0.01)
    recs = run_campaign(square_domain, square_dec8, EPS, pol, 100, master_seed=23)
    censored = [r for r in recs if r.censored]
    assert censored, "expected some censored flights with a tiny horizon"
    for r in censored:
        assert r.tau == 0.01
        assert abs(sum(r.shell_occupation.values()) - r.tau) <= 1e-9


def test_censored_fraction_small_with_defaults(square_domain, square_dec8):
    recs = run_campaign(square_domain, square_dec8, EPS, StepPolicy(), 2000, master_seed=29)
    frac = sum(r.censored for r in recs) / len(recs)
    assert frac < 0.01


def test_probe_matches_cube_oracle(square_domain):
    # start at the domain center: survival equals the exact product law
    n = 20000
    recs = run_paths_from(square_domain, np.array([1 / 3, 1 / 3]), n,
                          StepPolicy(delta_abs=1e-4), master_seed=31)
    taus = np.array([r.tau for r in recs])
    for t in (0.05, 0.2, 0.5):
        emp = float((taus > t).mean())
        oracle = cube_survival(1.0, 2, t)
        se = math.sqrt(oracle * (1 - oracle) / n)
        assert abs(emp - oracle) <= 3.0 * se, f"t={t}: {emp} vs {oracle}"


def test_refinement_does_not_worsen_agreement(square_domain):
    # halving c_step and delta_abs must not move survival away from the
    # oracle by more than 2 binomial standard errors
    n = 8000
    t_checks = (0.1, 0.3)
    coarse = run_paths_from(square_domain, np.array([1 / 3, 1 / 3]), n,
                            StepPolicy(c_step=0.2, delta_abs=2e-3), master_seed=37)
    fine = run_paths_from(square_domain, np.array([1 / 3, 1 / 3]), n,
                          StepPolicy(c_step=0.1, delta_abs=1e-3), master_seed=37)
    tc = np.array([r.tau for r in coarse])
    tf = np.array([r.tau for r in fine])
    for t in t_checks:
        oracle = cube_survival(1.0, 2, t)
        se = math.sqrt(oracle * (1 - oracle) / n)
        err_c = abs(float((tc > t).mean()) - oracle)
        err_f = abs(float((tf > t).mean()) - oracle)
        assert err_f <= err_c + 2.0 * se


def test_jsonl_roundtrip(square_domain, square_dec8):
    recs = run_campaign(square_domain, square_dec8, EPS, StepPolicy(), 20, master_seed=41)
    buf = io.StringIO()
    write_records_jsonl(buf, recs, header={"config": {"note": "test"}})
    buf.seek(0)
    header, back = read_records_jsonl(buf)
    assert header["kind"] == "flight_records"
    assert header["config"] == {"note": "test"}
    assert [record_key(r) for r in back] == [record_key(r) for r in recs]


def test_delta_regularity_square(square_domain, rng):
    pts = []
    while len(pts) < 10:
        p = rng.uniform(-1 / 6, 5 / 6, size=2)
        d = float(square_domain.signed_distance(p))
        if 0.005 < d < 0.08:
            pts.append(p)
    rep = estimate_delta_regularity(square_domain, np.array(pts), 400, StepPolicy(), seed=43)
    assert np.all(rep.fractions > 0.0) and np.all(rep.fractions < 1.0)
    assert rep.l_hat >= 0.2
    assert rep.to_dict()["n_paths"] == 400


def test_delta_regularity_rejects_outside_points(square_domain):
    with pytest.raises(ValueError):
        estimate_delta_regularity(square_domain, np.array([[5.0, 5.0]]), 10, StepPolicy(), 0)


def test_run_paths_rejects_outside_start(square_domain):
    with pytest.raises(ValueError):
        run_paths_from(square_domain, np.array([3.0, 3.0]), 10, StepPolicy(), 0)
