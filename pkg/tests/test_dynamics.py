import math
import os
import unittest

import numpy as np
import pandas as pd

from fixtures import small_data, small_pretrained, temp_dir
from unlearnlab.diffnet import Architecture, init_classifier, penultimate_features
from unlearnlab.dynamics import (
    TRACE_COLUMNS,
    class_accuracy_drop,
    feature_center,
    feature_distances,
    feature_stats,
    gravity_probe,
    new_trace,
    record_epoch,
    select_target_classes,
    trace_frame,
    unit_accuracies,
    write_class_drop_csv,
    write_trace_csv,
)
from unlearnlab.errors import DataError, RangeError, ShapeError
from unlearnlab.taxonomy import DomainLevel
from unlearnlab.tasks import ScenarioSpec, build_task

CLS, SUP = DomainLevel.CLASS, DomainLevel.SUPERCLASS


class TraceCase(unittest.TestCase):
    def setUp(self):
        self.train, _, self.taxonomy = small_data()
        self.pretrained = small_pretrained()
        self.task = build_task(self.train, self.taxonomy, ScenarioSpec(CLS, CLS, SUP), [0], [0])


class TestTrace(TraceCase):
    def test_groups(self):
        trace = new_trace(self.task, self.taxonomy)
        self.assertEqual(list(trace.groups), ["f", "uf", "r"])
        view = new_trace(self.task.engine_view(), self.taxonomy)
        self.assertEqual(list(view.groups), ["f", "un"])
        self.assertEqual(trace.n_units, 9)

    def test_record(self):
        trace = new_trace(self.task, self.taxonomy)
        record_epoch(trace, self.pretrained, self.train, self.task, self.taxonomy)
        record_epoch(trace, self.pretrained, self.train)
        record_epoch(trace, self.pretrained, self.train, epoch=5)
        self.assertEqual(trace.epochs, [0, 1, 5])
        snapshot = trace.at(0)
        self.assertEqual(set(snapshot.loss), {"f", "uf", "r"})
        for value in snapshot.accuracy.values():
            self.assertTrue(0.0 <= value <= 100.0)
        self.assertEqual(snapshot.class_accuracy.shape, (9,))

    def test_record_errors(self):
        trace = new_trace(self.task, self.taxonomy)
        record_epoch(trace, self.pretrained, self.train, epoch=2)
        with self.assertRaises(RangeError):
            record_epoch(trace, self.pretrained, self.train, epoch=2)
        with self.assertRaises(RangeError):
            trace.at(7)
        other = build_task(self.train, self.taxonomy, ScenarioSpec(CLS, CLS, CLS), [1])
        with self.assertRaises(DataError):
            record_epoch(trace, self.pretrained, self.train, other)

    def test_empty_group(self):
        task = build_task(self.train, self.taxonomy, ScenarioSpec(CLS, CLS, CLS), [0])
        trace = record_epoch(new_trace(task, self.taxonomy), self.pretrained, self.train)
        self.assertTrue(math.isnan(trace.at(0).loss["uf"]))
        self.assertEqual(trace.at(0).accuracy["uf"], 0.0)

    def test_frame(self):
        trace = new_trace(self.task, self.taxonomy)
        for _ in range(3):
            record_epoch(trace, self.pretrained, self.train)
        frame = trace_frame(trace)
        self.assertEqual(list(frame.columns), TRACE_COLUMNS)
        self.assertEqual(len(frame), 9)
        with temp_dir() as d:
            path = os.path.join(d, "trace.csv")
            write_trace_csv(path, trace)
            back = pd.read_csv(path)
        self.assertEqual(back["group"].tolist(), frame["group"].tolist())


class TestClassDrop(TraceCase):
    def test_same_epoch_is_zero(self):
        trace = new_trace(self.task, self.taxonomy)
        record_epoch(trace, self.pretrained, self.train)
        np.testing.assert_array_equal(class_accuracy_drop(trace, 0, 0), np.zeros(9))

    def test_drop_after_change(self):
        trace = new_trace(self.task, self.taxonomy)
        record_epoch(trace, self.pretrained, self.train)
        blank = init_classifier(self.pretrained.arch, 0, 1e-9)
        record_epoch(trace, blank, self.train)
        drops = class_accuracy_drop(trace, 0, 1)
        np.testing.assert_allclose(
            drops, trace.at(0).class_accuracy - trace.at(1).class_accuracy
        )
        self.assertGreater(drops.sum(), 0)

    def test_select(self):
        self.assertEqual(select_target_classes([3.0, 1.0, 2.0], 0), set())
        self.assertEqual(select_target_classes([3.0, 1.0, 2.0], 2), {0, 2})
        self.assertEqual(select_target_classes([1.0, 5.0, 5.0, 5.0], 2), {1, 2})
        self.assertEqual(select_target_classes([np.nan, 1.0, 0.5], 2), {1, 2})
        with self.assertRaises(RangeError):
            select_target_classes([np.nan, 1.0], 2)
        with self.assertRaises(RangeError):
            select_target_classes([1.0], -1)

    def test_csv(self):
        with temp_dir() as d:
            path = os.path.join(d, "drops.csv")
            write_class_drop_csv(path, [1.5, -0.5], ("a", "b"))
            back = pd.read_csv(path)
        self.assertEqual(list(back.columns), ["class", "name", "drop"])
        self.assertEqual(back["drop"].tolist(), [1.5, -0.5])

    def test_expected_unit_accuracy(self):
        idx = np.arange(len(self.train))
        blank = init_classifier(self.pretrained.arch, 0, 0.0)
        soft = unit_accuracies(blank, self.train, idx, CLS, CLS, 9, expected=True)
        np.testing.assert_allclose(soft, 100.0 / 9)
        hard = unit_accuracies(self.pretrained, self.train, idx, CLS, CLS, 9)
        soft = unit_accuracies(self.pretrained, self.train, idx, CLS, CLS, 9, expected=True)
        self.assertTrue(np.all((soft > 0) & (soft <= 100)))
        # probabilities on the own label track argmax hits on a fitted model
        self.assertLess(np.abs(soft - hard).max(), 50.0)
        empty = unit_accuracies(blank, self.train, idx[:0], CLS, CLS, 9, expected=True)
        self.assertTrue(np.all(np.isnan(empty)))


class TestGeometry(TraceCase):
    def test_single_sample_center(self):
        x = self.train.features[:1]
        np.testing.assert_allclose(
            feature_center(self.pretrained, x), penultimate_features(self.pretrained, x)[0]
        )
        flat = init_classifier(Architecture(self.train.feature_dim, (), 9), 0, 1.0)
        np.testing.assert_allclose(feature_center(flat, x), x[0])

    def test_distances(self):
        x = self.train.features[:10]
        stats = feature_stats(self.pretrained, x, "first")
        self.assertEqual(stats.distances.shape, (10,))
        self.assertGreaterEqual(stats.mean_distance, 0.0)
        self.assertEqual(stats.tag, "first")
        with self.assertRaises(ShapeError):
            feature_distances(self.pretrained, x, np.zeros(3))
        with self.assertRaises(DataError):
            feature_center(self.pretrained, np.zeros((0, self.train.feature_dim)))

    def test_gravity_probe_without_update(self):
        probe = gravity_probe(
            self.pretrained, self.pretrained, self.train, self.taxonomy, self.task.f_idx, CLS
        )
        self.assertEqual(probe.forget_change, 0.0)
        self.assertTrue(math.isnan(probe.label_change[0]))
        np.testing.assert_array_equal(probe.label_change[1:], 0.0)
        self.assertGreaterEqual(probe.forget_radius, 0.0)
        self.assertNotIn(0, probe.far_labels())

    def test_gravity_probe_grouping(self):
        blank = init_classifier(self.pretrained.arch, 1, 1.0)
        probe = gravity_probe(
            self.pretrained, blank, self.train, self.taxonomy, self.task.f_idx, CLS, SUP
        )
        self.assertEqual(probe.label_change.shape, (3,))
        self.assertGreater(probe.forget_change, 0.0)
        self.assertGreater(probe.mean_change([1, 2]), 0.0)
        with self.assertRaises(DataError):
            probe.mean_change([])
        with self.assertRaises(DataError):
            gravity_probe(self.pretrained, blank, self.train, self.taxonomy, [], CLS)


if __name__ == "__main__":
    unittest.main()
