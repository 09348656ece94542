import numpy as np
import pytest

from commitmotion import ingest, kde, synth
from commitmotion.synth import SynthConfig, SynthError, TrueRule, generate


def samples_for(res):
    events = ingest.align_transactions(res.events)
    contests = ingest.extract_contests(events, res.tracking)
    return contests, ingest.build_commitment_samples(contests, res.tracking)


def test_rule_examples():
    rule = TrueRule()
    assert rule(0.0, 0.0, 3.0, 2.0) == pytest.approx(1 / (1 + np.exp(-2.0)))
    assert rule(0.0, 0.0, 3.0, 2.0) >= rule(5.0, 5.0, 3.0, 2.0)
    assert rule(200.0, 0.0, 3.0, 1.0) < 1e-100
    d = np.linspace(0, 100, 401)
    for theta in (0.0, 1.0, 2.5):
        p = rule(d * np.cos(theta), d * np.sin(theta), 4.0, 2.0)
        assert np.all(np.diff(p) <= 0)
    with pytest.raises(SynthError):
        rule(1.0, 1.0, 1.0, 0.0)
    assert synth.ground_truth_probability(SynthConfig(), 3.0, 4.0, 2.0, 2.0) == rule(3.0, 4.0, 2.0, 2.0)


def test_config_validation():
    with pytest.raises(SynthError):
        SynthConfig(n_contests=0)
    with pytest.raises(SynthError):
        SynthConfig(players_per_team=19)
    with pytest.raises(SynthError):
        TrueRule(constant=1.5)


def tracking_rows(res):
    return [(s.player_id, s.t, s.x, s.y) for s in res.tracking.samples()]


def test_seeded_determinism():
    a = generate(SynthConfig(seed=21, n_contests=15))
    b = generate(SynthConfig(seed=21, n_contests=15))
    assert tracking_rows(a) == tracking_rows(b)
    assert a.events == b.events and a.truth == b.truth
    c = generate(SynthConfig(seed=22, n_contests=15))
    assert tracking_rows(c) != tracking_rows(a)


def test_rule_always_commit():
    res = generate(SynthConfig(seed=1, n_contests=10, noise=0.0, true_rule=TrueRule(constant=1.0)))
    contests, samples = samples_for(res)
    assert len(contests) == 10
    assert samples and all(s.c == 1 for s in samples)
    assert all(r.committed == 1 for r in res.truth)


def test_rule_never_commit():
    res = generate(SynthConfig(seed=1, n_contests=6, noise=0.0, max_retries=2,
                               true_rule=TrueRule(constant=0.0)))
    _, samples = samples_for(res)
    assert samples and all(s.c == 0 for s in samples)
    assert res.fallbacks == 6
    with pytest.raises(kde.KdeError, match="cannot weight one-sided data"):
        kde.fit_commitment_model(samples)


def test_labels_round_trip_without_noise(small_synth):
    contests, samples = samples_for(small_synth)
    got = {(s.contest_id, s.player_id): s for s in samples}
    truth = {(r.contest_id, r.player_id): r for r in small_synth.truth}
    assert got.keys() == truth.keys()
    assert sum(got[k].c != truth[k].committed for k in truth) == 0
    for k, r in truth.items():
        s = got[k]
        assert (s.x, s.y, s.v, s.t) == pytest.approx((r.x, r.y, r.v, r.t), abs=1e-6)


def test_commit_frequency_tracks_mean_rule(small_synth):
    arr = small_synth.truth_array()
    p, c = arr[:, 4], arr[:, 5]
    se = np.sqrt(p.mean() * (1 - p.mean()) / len(p))
    assert abs(c.mean() - p.mean()) <= 3 * se


def test_truth_csv_round_trip(tmp_path, small_synth):
    path = tmp_path / "truth.csv"
    synth.write_truth_csv(small_synth.truth, path)
    assert path.read_text().splitlines()[0] == "contest_id,player_id,p_star,committed"
    back = synth.read_truth_csv(path)
    assert [(r.contest_id, r.player_id, r.p_star, r.committed) for r in small_synth.truth] == back


def test_feature_clusters_shape():
    data, labels = synth.feature_clusters(500, [[0, 0], [10, 10]], 1.0, [0.3, 0.7], seed=2)
    assert data.shape == (500, 2)
    assert abs(labels.mean() - 0.7) < 0.06
