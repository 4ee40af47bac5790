import os
import unittest

from fixtures import temp_dir, tiny_config_file
from unlearnlab.config import OUTPUT_ENV, SCHEMA, format_schema, load_config, parse_config
from unlearnlab.errors import ConfigError
from unlearnlab.taxonomy import DomainLevel


class TestParse(unittest.TestCase):
    def assertField(self, text: str, field: str):
        with self.assertRaises(ConfigError) as cm:
            parse_config(text, environ={})
        self.assertEqual(cm.exception.field, field)
        self.assertIn(field, str(cm.exception))

    def test_defaults(self):
        cfg = parse_config("", environ={})
        self.assertEqual(cfg.seeds, [0])
        self.assertEqual(cfg.methods, ["tarf", "ft", "ga", "rl"])
        self.assertEqual(cfg.hidden_dims, (64, 32))
        self.assertEqual(cfg.output_dir, "runs")
        self.assertIsNone(cfg.target_labels())
        spec = cfg.scenario_spec()
        self.assertEqual(str(spec), "class/class/class")

    def test_values(self):
        cfg = parse_config(
            "[experiment]\nseeds = 3, 4\nmethods = tarf-i, scrub\n"
            "[task]\ntarget_level = Superclass\nforgetting_labels = class0, class1\n"
            "target_labels = super0\n",
            environ={},
        )
        self.assertEqual(cfg.seeds, [3, 4])
        self.assertEqual(cfg.methods, ["tarf-i", "scrub"])
        self.assertEqual(cfg.scenario_spec().target_level, DomainLevel.SUPERCLASS)
        self.assertEqual(cfg.forgetting_labels(), ["class0", "class1"])
        self.assertEqual(cfg.target_labels(), ["super0"])

    def test_unknown_names(self):
        self.assertField("[task]\nfoo = 1\n", "task.foo")
        self.assertField("[nonsense]\nfoo = 1\n", "nonsense")

    def test_bad_values(self):
        self.assertField("[unlearn]\nepochs = ten\n", "unlearn.epochs")
        self.assertField("[task]\ndata_level = species\n", "task.data_level")
        self.assertField("[schedule]\nt1 = 20\n", "schedule.t1")
        self.assertField("[schedule]\nk = -1\n", "schedule.k")
        self.assertField("[pretrain]\nlearning_rate = 0\n", "pretrain.learning_rate")
        self.assertField("[experiment]\nmethods = tarf, magic\n", "experiment.methods")
        self.assertField("[experiment]\nmethods = ft, ft\n", "experiment.methods")
        self.assertField("[experiment]\nseeds =\n", "experiment.seeds")
        self.assertField("[experiment]\nparallel = 0\n", "experiment.parallel")
        self.assertField("[dataset]\nsource = table\n", "dataset.path")
        self.assertField("[dataset]\nsource = mnist\n", "dataset.source")
        self.assertField(
            "[dataset.synthetic]\nsuperclasses = 0\n", "dataset.synthetic.superclasses"
        )
        self.assertField("[tau]\ngranularity = bogus\n", "tau")
        self.assertField("[tau]\ndeclared_count = -2\n", "tau.declared_count")
        self.assertField("[engine]\nuf_mode = sideways\n", "engine")
        self.assertField("[task]\nforgetting_labels =\n", "task.forgetting_labels")

    def test_unreadable(self):
        with self.assertRaises(ConfigError):
            parse_config("no section header\n", environ={})

    def test_output_env(self):
        cfg = parse_config("[experiment]\noutput_dir = here\n", environ={OUTPUT_ENV: "/tmp/x"})
        self.assertEqual(cfg.output_dir, "/tmp/x")
        cfg = parse_config("[experiment]\noutput_dir = here\n", environ={OUTPUT_ENV: ""})
        self.assertEqual(cfg.output_dir, "here")

    def test_engine_config(self):
        cfg = parse_config("[unlearn]\nepochs = 7\nlearning_rate = 0.02\n", environ={})
        engine = cfg.engine_config(5)
        self.assertEqual(engine.sched.T, 7)
        self.assertEqual(engine.train.epochs, 7)
        self.assertEqual(engine.train.learning_rate, 0.02)
        self.assertEqual(engine.train.seed, 5)
        self.assertEqual(cfg.pretrain_config(5).epochs, 30)

    def test_normalized_text(self):
        a = parse_config("[experiment]\nseeds = 1, 2\n", environ={})
        b = parse_config("[experiment]\nseeds = 1,2\n", environ={})
        c = parse_config("[experiment]\nseeds = 1, 3\n", environ={})
        self.assertEqual(a.normalized_text(), b.normalized_text())
        self.assertNotEqual(a.normalized_text(), c.normalized_text())

    def test_schema_lists_every_key(self):
        text = format_schema()
        for section, keys in SCHEMA.items():
            self.assertIn(f"[{section}]", text)
            for key in keys:
                self.assertIn(f"{key.name} = {key.default}", text)
        # the printed defaults are themselves a valid config
        self.assertEqual(
            parse_config(text, environ={}).normalized_text(),
            parse_config("", environ={}).normalized_text(),
        )


class TestLoad(unittest.TestCase):
    def test_file(self):
        with temp_dir() as d:
            cfg = load_config(tiny_config_file(d), environ={})
            self.assertEqual(cfg.name, "tiny")
            self.assertEqual(cfg.output_dir, os.path.join(d, "runs"))
            self.assertEqual(cfg.seeds, [0, 1, 2])

    def test_missing_file(self):
        with temp_dir() as d, self.assertRaises(ConfigError):
            load_config(os.path.join(d, "absent.ini"))

    def test_no_file(self):
        self.assertEqual(load_config(None, environ={}).name, "unlearnlab")


if __name__ == "__main__":
    unittest.main()
