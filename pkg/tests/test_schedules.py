import math
import unittest

import numpy as np

from unlearnlab.errors import ConfigError, NumericError, PolicyError, RangeError
from unlearnlab.schedules import (
    AnnealSchedule,
    Granularity,
    ScheduleMode,
    TauMask,
    TauPolicy,
    con_indicator,
    estimate_beta,
    k_at,
    tau_mask,
)


class TestSchedule(unittest.TestCase):
    def test_annealed(self):
        sched = AnnealSchedule(k=0.05, t0=2, t1=1, T=10)
        self.assertAlmostEqual(k_at(sched, 0), 0.04)
        self.assertEqual(k_at(sched, 8), 0.0)
        self.assertEqual(k_at(sched, 9), 0.0)
        values = [k_at(sched, t) for t in range(11)]
        self.assertEqual(values, sorted(values, reverse=True))

    def test_constant_and_increasing(self):
        constant = AnnealSchedule(k=0.5, t0=2, t1=1, T=10, mode="constant")
        self.assertEqual(constant.mode, ScheduleMode.CONSTANT)
        self.assertEqual({k_at(constant, t) for t in range(11)}, {0.5})
        increasing = AnnealSchedule(k=1.0, t0=2, t1=1, T=10, mode="increasing")
        self.assertAlmostEqual(k_at(increasing, 0), 0.2)
        self.assertAlmostEqual(k_at(increasing, 8), 1.0)

    def test_out_of_range(self):
        sched = AnnealSchedule(k=1.0, t0=0, t1=0, T=5)
        with self.assertRaises(RangeError):
            k_at(sched, 6)
        with self.assertRaises(RangeError):
            k_at(sched, -1)

    def test_invalid(self):
        cases = {
            "schedule.k": dict(k=-1.0, t0=0, t1=0, T=5),
            "schedule.T": dict(k=1.0, t0=0, t1=0, T=0),
            "schedule.t0": dict(k=1.0, t0=6, t1=0, T=5),
            "schedule.t1": dict(k=1.0, t0=0, t1=6, T=5),
        }
        for field, kwargs in cases.items():
            with self.subTest(field=field):
                with self.assertRaises(ConfigError) as ctx:
                    AnnealSchedule(**kwargs)
                self.assertEqual(ctx.exception.field, field)
        with self.assertRaises(ConfigError):
            AnnealSchedule(k=math.inf, t0=0, t1=0, T=5)
        with self.assertRaises(ValueError):
            AnnealSchedule(k=1.0, t0=0, t1=0, T=5, mode="cyclic")


class TestIndicator(unittest.TestCase):
    def test_scalar(self):
        self.assertEqual(con_indicator(2.0, 0.5), 1.5)
        self.assertEqual(con_indicator(0.5, 2.0), 1.5)

    def test_elementwise(self):
        np.testing.assert_array_equal(con_indicator([1, 2, 3], [3, 2, 1]), [2, 0, 2])

    def test_non_finite(self):
        with self.assertRaises(NumericError):
            con_indicator([1.0, np.nan], [1.0, 1.0])


class TestBeta(unittest.TestCase):
    CHANGES = [5, 4, 0.3, 0.2]

    def test_classwise(self):
        policy = TauPolicy(declared_count=2)
        self.assertAlmostEqual(estimate_beta(self.CHANGES, policy), 2.15)
        self.assertAlmostEqual(estimate_beta([0.2, 5, 0.3, 4], policy), 2.15)

    def test_classwise_zero(self):
        self.assertEqual(estimate_beta(self.CHANGES, TauPolicy(declared_count=0)), math.inf)

    def test_classwise_errors(self):
        with self.assertRaises(PolicyError):
            estimate_beta(self.CHANGES, TauPolicy())
        with self.assertRaises(PolicyError):
            estimate_beta(self.CHANGES, TauPolicy(declared_count=4))
        with self.assertRaises(PolicyError):
            estimate_beta([], TauPolicy(declared_count=1))
        with self.assertRaises(ConfigError):
            TauPolicy(declared_count=-1)

    def test_instancewise(self):
        policy = TauPolicy(granularity="instancewise", quantile=0.25)
        self.assertEqual(policy.granularity, Granularity.INSTANCEWISE)
        changes = np.arange(101, dtype=float)
        self.assertAlmostEqual(estimate_beta(changes, policy), 75.0)
        with self.assertRaises(ConfigError):
            TauPolicy(granularity="instancewise", quantile=0.0)

    def test_override(self):
        policy = TauPolicy(declared_count=2, beta_override=0.5)
        self.assertEqual(estimate_beta(self.CHANGES, policy), 0.5)
        self.assertEqual(estimate_beta(self.CHANGES, TauPolicy(beta_override=math.inf)), math.inf)
        with self.assertRaises(ConfigError):
            TauPolicy(beta_override=math.nan)

    def test_declared_count_fallback(self):
        self.assertEqual(TauPolicy().with_declared_count(3).declared_count, 3)
        self.assertEqual(TauPolicy(declared_count=1).with_declared_count(3).declared_count, 1)


class TestTau(unittest.TestCase):
    def test_before_t1(self):
        mask = tau_mask([0.01, 0.5], beta=0.1, t=0, t1=1)
        np.testing.assert_array_equal(mask.values, [0, 0])

    def test_after_t1(self):
        mask = tau_mask([0.5, 0.01], beta=0.1, t=2, t1=1)
        np.testing.assert_array_equal(mask.values, [0, 1])
        self.assertEqual(mask.retained, 1)
        np.testing.assert_array_equal(mask.at(0), [0, 0])
        np.testing.assert_array_equal(mask.at(5), [0, 1])

    def test_at_switches_on_at_frozen_epoch(self):
        mask = TauMask([1, 0, 1], frozen_at=2, beta=0.5)
        for t in (0, 1):
            np.testing.assert_array_equal(mask.at(t), [0, 0, 0])
        for t in (2, 9):
            np.testing.assert_array_equal(mask.at(t), [1, 0, 1])
        self.assertEqual(mask.at(0).dtype, mask.values.dtype)

    def test_strict_threshold(self):
        mask = tau_mask([0.1], beta=0.1, t=1, t1=1)
        np.testing.assert_array_equal(mask.values, [0])

    def test_infinite_beta_retains_everything(self):
        mask = tau_mask([1e9, 0.0], beta=math.inf, t=1, t1=1)
        self.assertEqual(mask.retained, 2)

    def test_frozen_values(self):
        mask = tau_mask([0.0], beta=1.0, t=1, t1=1)
        with self.assertRaises(ValueError):
            mask.values[0] = 0


if __name__ == "__main__":
    unittest.main()
