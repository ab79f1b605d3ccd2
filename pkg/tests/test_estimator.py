import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from funnelrank.data import GeneratorConfig, generate
from funnelrank.estimator import FunnelRanker


@pytest.fixture(scope="module")
def groups():
    return generate(GeneratorConfig(seed=0, n_queries=150))


def test_fit_predict_score_roundtrip(groups):
    est = FunnelRanker(architecture="shared_bottom", tasks=2, epochs=2, seed=0)
    est.fit(groups)
    probs = est.predict_proba(groups[:5])
    assert len(probs) == 5
    assert probs[0].shape == (len(groups[0].records), 2)
    assert ((probs[0] > 0) & (probs[0] < 1)).all()
    rankings = est.predict(groups[:3])
    assert sorted(rankings[0].tolist()) == list(range(len(groups[0].records)))
    assert 0.0 <= est.score(groups[:50]) <= 1.0


def test_seq_with_adaptor_fits(groups):
    est = FunnelRanker(architecture="seq", md="in_sequence", tasks=2, epochs=2,
                       hidden=8, seed=0)
    est.fit(groups)
    assert est.split_ is not None
    assert est.task_names_ == ["click", "purchase"]


def test_unfitted_raises(groups):
    est = FunnelRanker()
    with pytest.raises(NotFittedError):
        est.predict_proba(groups)
    with pytest.raises(NotFittedError):
        est.score(groups)


def test_clone_and_get_params_roundtrip():
    est = FunnelRanker(architecture="ple", md="input_plug", epochs=5,
                       learning_rate=0.02, seed=3)
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()
    assert cloned.get_params()["architecture"] == "ple"


def test_set_params_chains():
    est = FunnelRanker().set_params(architecture="seq", hidden=16)
    assert est.hidden == 16


def test_rejects_non_group_input():
    with pytest.raises(TypeError, match="QueryGroup"):
        FunnelRanker().fit([np.zeros(4)])
    with pytest.raises(ValueError, match="no query groups"):
        FunnelRanker().fit([])
