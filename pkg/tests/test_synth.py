import json

import numpy as np
import pytest

from p2pscaling.sessions import classify_sessions, group_sessions, signaling_report
from p2pscaling.synth import (SessionBlueprint, SessionMixSpec, fgn_autocovariance, gen_fgn,
                              gen_periodic, gen_poisson, gen_session_mix, random_session_mix,
                              trace_from_counts, write_ground_truth)
from p2pscaling.timeseries import bin_counts


def _acf(x, lag):
    x = x - x.mean()
    return float(np.dot(x[:-lag], x[lag:]) / np.dot(x, x))


def test_fgn_lag1_independent_formula():
    # closed form r(1) = 2^(2H-1) - 1
    assert fgn_autocovariance(0.8, [1])[0] == pytest.approx(2 ** 0.6 - 1)
    r1 = np.mean([_acf(gen_fgn(2 ** 16, 0.8, s), 1) for s in range(5)])
    assert r1 == pytest.approx(2 ** 0.6 - 1, abs=0.03)


def test_fgn_white_case():
    assert abs(_acf(gen_fgn(2 ** 16, 0.5, 0), 1)) <= 0.02


def test_fgn_autocovariance_several_lags():
    x = np.stack([gen_fgn(2 ** 14, 0.7, s) for s in range(20)])
    for lag in (1, 2, 5, 10):
        emp = np.mean([_acf(row, lag) for row in x])
        assert emp == pytest.approx(float(fgn_autocovariance(0.7, [lag])[0]), abs=0.03)
    assert x.var() == pytest.approx(1.0, abs=0.1)


def test_fgn_deterministic_and_errors():
    assert np.array_equal(gen_fgn(1024, 0.8, 42), gen_fgn(1024, 0.8, 42))
    assert not np.array_equal(gen_fgn(1024, 0.8, 42), gen_fgn(1024, 0.8, 43))
    with pytest.raises(ValueError):
        gen_fgn(1000, 0.8, 0)
    for h in (0, 1, 1.2):
        with pytest.raises(ValueError):
            gen_fgn(1024, h, 0)


def test_poisson_mean_and_fano():
    x = gen_poisson(2 ** 16, 5, 0)
    assert x.mean() == pytest.approx(5, abs=0.1)
    assert x.var() / x.mean() == pytest.approx(1, abs=0.05)
    assert np.array_equal(x, gen_poisson(2 ** 16, 5, 0))
    with pytest.raises(ValueError):
        gen_poisson(10, 0, 0)


def test_periodic_mean_and_degenerate_case():
    x = gen_periodic(2 ** 16, 256, 5, 4, 1)
    assert x.mean() == pytest.approx(5 + 4 / 2, abs=0.1)
    assert np.array_equal(gen_periodic(4096, 256, 5, 0, 9), gen_poisson(4096, 5, 9))
    for bad in ((1, 5, 1), (256, 5, -1), (256, -1, 0.5)):
        with pytest.raises(ValueError):
            gen_periodic(100, *bad, seed=0)


def test_mix_labels_recovered():
    spec = SessionMixSpec([
        SessionBlueprint("video", 12, 30, remote_addr="192.0.2.1"),
        SessionBlueprint("video", 10, 0, large_size=1000, remote_addr="192.0.2.2",
                         transport="TCP"),
        SessionBlueprint("signaling", 9, 10, remote_addr="192.0.2.3"),
        SessionBlueprint("signaling", 0, 50, remote_addr="192.0.2.4", timing="poisson"),
        SessionBlueprint("signaling", 3, 3, remote_addr="192.0.2.1", remote_port=9000),
    ], duration=30, seed=5)
    records, truth = gen_session_mix(spec)
    assert len(records) == 12 + 30 + 10 + 19 + 50 + 6
    labels = classify_sessions(group_sessions(records))
    assert {lab.key: lab.is_video for lab in labels} == truth.session_is_video
    assert sum(truth.packet_is_video) == 22
    assert all(0 <= r.timestamp <= 30 for r in records)
    ts = [r.timestamp for r in records]
    assert ts == sorted(ts)


def test_mix_empty_spec():
    records, truth = gen_session_mix(SessionMixSpec([], 10, 0))
    assert records == [] and truth.session_is_video == {} and truth.packet_is_video == []


@pytest.mark.parametrize("bp", [
    SessionBlueprint("video", 9, 0),
    SessionBlueprint("signaling", 10, 0),
    SessionBlueprint("video", 10, 0, large_size=(999, 1500)),
    SessionBlueprint("signaling", 0, 5, small_size=(40, 1000)),
    SessionBlueprint("chatter", 0, 5),
    SessionBlueprint("signaling", 0, 5, timing="bursty"),
])
def test_mix_refuses_ambiguous_blueprints(bp):
    with pytest.raises(ValueError):
        gen_session_mix(SessionMixSpec([bp], 10, 0))


def test_mix_refuses_duplicate_sessions():
    bp = SessionBlueprint("signaling", 0, 5)
    with pytest.raises(ValueError, match="duplicate"):
        gen_session_mix(SessionMixSpec([bp, bp], 10, 0))


def test_mix_deterministic_and_serializable(tmp_path):
    spec = random_session_mix(11)
    a, ta = gen_session_mix(spec)
    b, tb = gen_session_mix(SessionMixSpec.from_dict(json.loads(json.dumps(spec.to_dict()))))
    assert a == b and ta == tb
    write_ground_truth(tmp_path / "t.json", ta, spec)
    payload = json.loads((tmp_path / "t.json").read_text())
    assert len(payload["packet_is_video"]) == len(a)


def test_mix_thirty_percent_signaling():
    spec = SessionMixSpec([
        SessionBlueprint("video", 70, 0, large_size=1000, download_share=1.0,
                         remote_addr="192.0.2.1"),
        SessionBlueprint("signaling", 0, 200, small_size=150, download_share=1.0,
                         remote_addr="192.0.2.2"),
    ], duration=60, seed=2)
    records, _ = gen_session_mix(spec)
    rep = signaling_report(records, classify_sessions(group_sessions(records)))
    assert rep.download_ratio == pytest.approx(0.30, abs=1e-9)


def test_trace_from_counts_reproduces_series():
    up = gen_poisson(500, 3, 1)
    down = gen_poisson(500, 6, 2)
    recs = trace_from_counts(up, down, 0.02, seed=0)
    for direction, counts in (("Upload", up), ("Download", down)):
        stamps = [r.timestamp for r in recs if r.direction.value == direction]
        idx = np.floor(np.round(np.asarray(stamps) * 1e6) / 20000).astype(int)
        assert np.array_equal(np.bincount(idx, minlength=len(counts)), counts)
    assert bin_counts(recs, 0.02, "Download").counts.sum() == down.sum()
    labels = classify_sessions(group_sessions(recs))
    assert all(lab.is_video for lab in labels)
