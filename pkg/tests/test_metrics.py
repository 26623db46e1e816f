"""Variance NMSE and transition-matrix KL divergence."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from burstem import (
    MiddletonParams,
    build_reference_hmm,
    kl_transitions,
    metric_report,
    nmse_variances,
)

REF = build_reference_hmm(MiddletonParams(0.3, 10.0, 0.9))
INIT = build_reference_hmm(MiddletonParams(0.1, 1.0, 0.0))


class TestNmse:
    def test_known_value(self):
        # only the impulsive entries are off, each by 0.6/34.3 relative
        got = nmse_variances([1.0, 33.7, 1.0, 33.7], [1.0, 34.3, 1.0, 34.3])
        assert got == pytest.approx(1.5299747554165356e-4, rel=1e-12)

    def test_exact_match_is_zero(self):
        assert nmse_variances(REF.variances, REF.variances) == 0.0

    def test_doubling_every_variance(self):
        ref = np.array([1.0, 5.0, 1.0, 5.0])
        assert nmse_variances(2.0 * ref, ref) == pytest.approx(1.0, rel=1e-14)

    def test_accepts_param_objects(self):
        assert nmse_variances(INIT, REF) == pytest.approx(
            nmse_variances(INIT.variances, REF.variances)
        )

    def test_normalization_weights_states_equally(self):
        # equal relative error on a tiny and a huge state contribute equally
        ref = np.array([1.0, 1000.0, 1.0, 1000.0])
        est = ref * np.array([1.1, 1.0, 1.0, 1.0])
        a = nmse_variances(est, ref)
        est2 = ref * np.array([1.0, 1.1, 1.0, 1.0])
        assert nmse_variances(est2, ref) == pytest.approx(a, rel=1e-12)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            nmse_variances([1.0, 2.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            nmse_variances(np.ones((2, 2)), np.ones((2, 2)))

    def test_rejects_nonpositive_reference(self):
        with pytest.raises(ValueError):
            nmse_variances([1.0, 2.0], [1.0, 0.0])


class TestKl:
    def test_known_value(self):
        got = kl_transitions(REF, INIT)
        assert got == pytest.approx(3.9764940458303392, rel=1e-12)

    def test_self_divergence_is_zero(self):
        assert kl_transitions(REF, REF) == 0.0

    def test_direction_matters(self):
        assert kl_transitions(INIT, REF) != pytest.approx(
            kl_transitions(REF, INIT), rel=1e-3
        )

    def test_decomposes_over_rows(self):
        ref = REF.transitions
        est = INIT.transitions
        rows = sum(
            float(np.sum(ref[i] * np.log(ref[i] / est[i])))
            for i in range(ref.shape[0])
        )
        assert kl_transitions(ref, est) == pytest.approx(rows, rel=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = rng.dirichlet(np.ones(4), size=4)
            q = rng.dirichlet(np.ones(4), size=4)
            assert kl_transitions(p, q) >= 0.0

    def test_reference_zeros_contribute_nothing(self):
        ref = np.array([[0.5, 0.5, 0.0], [0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
        est = np.array([[0.4, 0.3, 0.3], [0.1, 0.4, 0.5], [0.8, 0.1, 0.1]])
        got = kl_transitions(ref, est)
        assert np.isfinite(got)
        # zeroing the estimate where the reference is zero changes nothing
        est2 = est.copy()
        est2[0, 2] = 0.0
        est2[0] /= est2[0].sum()
        by_hand = sum(
            ref[i, j] * np.log(ref[i, j] / est2[i, j])
            for i in range(3)
            for j in range(3)
            if ref[i, j] > 0
        )
        assert kl_transitions(ref, est2) == pytest.approx(by_hand, rel=1e-12)

    def test_infinite_divergence_rejected(self):
        ref = np.array([[0.5, 0.5], [0.5, 0.5]])
        est = np.array([[1.0, 0.0], [0.5, 0.5]])
        with pytest.raises(ValueError):
            kl_transitions(ref, est)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            kl_transitions(np.ones(4) / 4, np.ones(4) / 4)
        with pytest.raises(ValueError):
            kl_transitions(np.full((2, 3), 0.5), np.full((2, 3), 0.5))
        with pytest.raises(ValueError):
            kl_transitions(REF.transitions, INIT.transitions[:2, :2])


class TestMetricReport:
    def test_bundles_both_metrics(self):
        report = metric_report(INIT, REF)
        assert report.nmse_variance == pytest.approx(
            nmse_variances(INIT.variances, REF.variances)
        )
        assert report.kl_transition == pytest.approx(
            kl_transitions(REF.transitions, INIT.transitions)
        )

    def test_dict_keys(self):
        d = metric_report(INIT, REF).to_dict()
        assert d == {
            "nmse_variance": pytest.approx(nmse_variances(INIT, REF)),
            "kl_transition": pytest.approx(kl_transitions(REF, INIT)),
        }

    def test_perfect_estimate(self):
        report = metric_report(REF, REF)
        assert report.nmse_variance == 0.0
        assert report.kl_transition == 0.0
