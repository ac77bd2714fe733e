import json
import os
import tempfile
from unittest import TestCase
from pydantic import ValidationError
from config import ExperimentSpec, PolicyConfig, ServiceConfig, SimConfig, load_experiment

GOOD_SIM = {
    "N": 10,
    "lambda": 0.8,
    "scheme": {"kind": "baseline", "tau": 1.0, "K": 2},
    "horizon": 100,
}


class TestServiceConfig(TestCase):

    def test_defaults_to_unit_exponential(self):
        service = ServiceConfig()
        self.assertTrue(service.is_exponential)
        self.assertEqual(1.0, service.mean)
        self.assertEqual("exponential", service.label())

    def test_gamma(self):
        service = ServiceConfig(kind="gamma", shape=2.0, rate=2.0)
        self.assertFalse(service.is_exponential)
        self.assertEqual(1.0, service.mean)
        self.assertEqual("gamma(2,2)", service.label())

    def test_invalid_values_rejected(self):
        with self.assertRaises(ValidationError):
            ServiceConfig(kind="uniform")
        with self.assertRaises(ValidationError):
            ServiceConfig(kind="gamma", shape=0.0)
        with self.assertRaises(ValidationError):
            ServiceConfig(kind="gamma", speeds=[1.0])
        with self.assertRaises(ValidationError):
            ServiceConfig(speeds=[1.0, -1.0])


class TestPolicyConfig(TestCase):

    def test_baseline_needs_tau(self):
        with self.assertRaises(ValidationError):
            PolicyConfig(kind="baseline")
        with self.assertRaises(ValidationError):
            PolicyConfig(kind="baseline", tau=0.0)
        self.assertEqual(2.0, PolicyConfig(kind="aujsq", tau=2.0).update_law().tau)

    def test_extension(self):
        config = PolicyConfig(kind="extension", tau1=0.5, tau2=1.0, tau3=1.0)
        self.assertEqual(0.5, config.extension_params().tau1)
        self.assertEqual("extension(0.5,1,1)", config.label())
        with self.assertRaises(ValueError):
            config.update_law()

    def test_extension_constraints(self):
        with self.assertRaises(ValidationError):
            PolicyConfig(kind="extension", K=3, tau1=0.5, tau2=1.0, tau3=1.0)
        with self.assertRaises(ValidationError):
            PolicyConfig(kind="extension", tau1=0.5, tau2=1.0)
        with self.assertRaises(ValidationError):
            PolicyConfig(kind="extension", tau1=0.5, tau2=1.0, tau3=0.0)

    def test_unknown_values_rejected(self):
        with self.assertRaises(ValidationError):
            PolicyConfig(kind="jsq", tau=1.0)
        with self.assertRaises(ValidationError):
            PolicyConfig(kind="baseline", tau=1.0, selection="round_robin")
        with self.assertRaises(ValidationError):
            PolicyConfig(kind="aujsq", tau=1.0, aujsq_phase="never")

    def test_labels(self):
        self.assertEqual("baseline", PolicyConfig(tau=1.0).label())
        self.assertEqual("baseline(fcfs)", PolicyConfig(tau=1.0, selection="fcfs").label())
        self.assertEqual("aujsq(staggered)", PolicyConfig(kind="aujsq", tau=1.0).label())


class TestSimConfig(TestCase):

    def test_alias_and_warmup(self):
        config = SimConfig(**GOOD_SIM)
        self.assertEqual(0.8, config.lam)
        self.assertEqual(20.0, config.warmup_time)

    def test_invalid_values_rejected(self):
        for update in ({"lambda": 0.0}, {"horizon": -1.0}, {"warmup": 1.0}, {"seed": -1}, {"N": 0},
                       {"tiebreak": "arrivals_first"}):
            with self.assertRaises(ValidationError, msg=str(update)):
                SimConfig(**{**GOOD_SIM, **update})

    def test_speeds_must_match_N(self):
        with self.assertRaises(ValidationError):
            SimConfig(**GOOD_SIM, service={"speeds": [1.0, 2.0]})
        config = SimConfig(**GOOD_SIM, service={"speeds": [1.0] * 10})
        self.assertEqual(10, len(config.service.speeds))

    def test_non_idling_needs_exponential(self):
        with self.assertRaises(ValidationError):
            SimConfig(**{**GOOD_SIM, "scheme": {"kind": "non_idling", "tau": 1.0}},
                      service={"kind": "gamma", "shape": 2.0, "rate": 2.0})


class TestExperimentSpec(TestCase):

    def test_seed_list(self):
        spec = ExperimentSpec(mode="simulate", sim={**GOOD_SIM, "seed": 40}, seeds=3)
        self.assertEqual([40, 41, 42], spec.seed_list())
        spec = ExperimentSpec(mode="simulate", sim=GOOD_SIM, seeds=[7, 3])
        self.assertEqual([7, 3], spec.seed_list())

    def test_mode_inputs_required(self):
        with self.assertRaises(ValidationError):
            ExperimentSpec(mode="bound", Ks=[1])
        with self.assertRaises(ValidationError):
            ExperimentSpec(mode="sweep")
        with self.assertRaises(ValidationError):
            ExperimentSpec(mode="extension")
        with self.assertRaises(ValidationError):
            ExperimentSpec(mode="fit")

    def test_sweep_keys(self):
        spec = ExperimentSpec(mode="sweep", sim=GOOD_SIM, sweep={"tau": [0.5, 1.0], "lambda": [0.5]})
        self.assertEqual([0.5, 1.0], spec.sweep["tau"])
        with self.assertRaises(ValidationError):
            ExperimentSpec(mode="sweep", sim=GOOD_SIM, sweep={"horizon": [10]})
        with self.assertRaises(ValidationError):
            ExperimentSpec(mode="sweep", sim=GOOD_SIM, sweep={"tau": []})

    def test_grids_positive(self):
        with self.assertRaises(ValidationError):
            ExperimentSpec(mode="bound", Ks=[1], deltas=[0.5, -0.1])
        with self.assertRaises(ValidationError):
            ExperimentSpec(mode="bound", Ks=[], deltas=[0.5])


class TestLoadExperiment(TestCase):

    def test_missing_file(self):
        with self.assertLogs(level="ERROR"):
            with self.assertRaises(ValueError):
                load_experiment("/nonexistent/experiment.json")

    def test_invalid_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "broken.json")
            with open(path, "w") as f:
                f.write("{mode: ")
            with self.assertRaises(ValueError):
                load_experiment(path)

    def test_valid_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "experiment.json")
            with open(path, "w") as f:
                json.dump({"mode": "simulate", "sim": GOOD_SIM, "seeds": 2}, f)
            spec = load_experiment(path)
        self.assertEqual("simulate", spec.mode)
        self.assertEqual(10, spec.sim.N)

    def test_shipped_presets_are_valid(self):
        root = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config")
        paths = [os.path.join(root, "config.sample.json")]
        presets = os.path.join(root, "presets")
        paths += [os.path.join(presets, x) for x in sorted(os.listdir(presets)) if x.endswith(".json")]
        for path in paths:
            spec = load_experiment(path)
            self.assertIsNotNone(spec.mode, path)
