import csv
import json
import math
import os
import tempfile
from unittest import TestCase
from config import ExperimentSpec
from hyperlb import (EXIT_CONFIG, EXIT_OK, EXIT_USAGE, UsageError, cmd_bound, cmd_extension, expand_sweep,
                     format_value, main)

GOLDEN_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden")

SIM = {
    "N": 5,
    "lambda": 0.7,
    "scheme": {"kind": "baseline", "tau": 1.0, "K": 2},
    "horizon": 60.0,
    "seed": 2,
}


class TestMain(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.output = os.path.join(self.tmp.name, "out.csv")

    def tearDown(self):
        self.tmp.cleanup()

    def read_rows(self):
        with open(self.output, newline="") as f:
            return list(csv.DictReader(f))

    def write_experiment(self, experiment: dict) -> str:
        path = os.path.join(self.tmp.name, "experiment.json")
        with open(path, "w") as f:
            json.dump(experiment, f)
        return path

    def test_bound(self):
        code = main(["bound", "--deltas", "0.5", "1", "--Ks", "1", "2", "--output", self.output])
        self.assertEqual(EXIT_OK, code)
        rows = self.read_rows()
        self.assertEqual(4, len(rows))
        self.assertEqual(["curve", "delta", "K", "lambda_star"], list(rows[0].keys()))
        row = [x for x in rows if x["K"] == "2" and x["delta"] == "1"][0]
        self.assertAlmostEqual(2 - 3 * math.exp(-1), float(row["lambda_star"]), places=8)

    def test_csv_has_single_header_and_lf(self):
        main(["bound", "--deltas", "1", "--Ks", "1", "--output", self.output])
        with open(self.output, "rb") as f:
            content = f.read()
        self.assertNotIn(b"\r\n", content)
        self.assertEqual(2, content.count(b"\n"))

    def test_pmf(self):
        code = main(["pmf", "--N", "3", "--lambda", "0.5", "--tau", "1", "--K", "2", "--output", self.output])
        self.assertEqual(EXIT_OK, code)
        rows = self.read_rows()
        self.assertEqual(["0", "1", "2", "3"], [x["n"] for x in rows])
        self.assertAlmostEqual(1.0, sum(float(x["probability"]) for x in rows), places=7)
        self.assertAlmostEqual(float(rows[0]["probability"]), float(rows[0]["blocking"]), places=8)

    def test_pmf_needs_population(self):
        self.assertEqual(EXIT_USAGE, main(["pmf", "--tau", "1"]))

    def test_extension(self):
        code = main(["extension", "--tau1", "0", "0.5", "1", "--tau2", "1", "--tau3", "1", "--output", self.output])
        self.assertEqual(EXIT_OK, code)
        rows = self.read_rows()
        self.assertEqual(3, len(rows))
        self.assertEqual(["0", "0.5", "1"], [x["tau1"] for x in rows])

    def test_extension_rejects_tau3_zero(self):
        self.assertEqual(EXIT_CONFIG, main(["extension", "--tau1", "1", "--tau2", "1", "--tau3", "0"]))

    def test_usage_errors(self):
        self.assertEqual(EXIT_USAGE, main(["fly"]))
        self.assertEqual(EXIT_USAGE, main(["extension", "--tau1", "1", "2", "--tau2", "1", "2", "3", "--tau3", "1"]))
        self.assertEqual(EXIT_USAGE, main(["simulate"]))
        self.assertEqual(EXIT_USAGE, main(["reproduce", "no_such_preset"]))

    def test_missing_config(self):
        with self.assertLogs(level="ERROR"):
            code = main(["simulate", "--config", os.path.join(self.tmp.name, "missing.json")])
        self.assertEqual(EXIT_CONFIG, code)

    def test_invalid_config(self):
        path = self.write_experiment({"mode": "simulate", "sim": {**SIM, "horizon": -5}})
        self.assertEqual(EXIT_CONFIG, main(["simulate", "--config", path]))

    def test_simulate(self):
        path = self.write_experiment({"mode": "simulate", "sim": SIM, "seeds": 2})
        code = main(["simulate", "--config", path, "--output", self.output])
        self.assertEqual(EXIT_OK, code)
        rows = self.read_rows()
        self.assertEqual(["2", "3"], [x["seed"] for x in rows])
        self.assertEqual({"true"}, {x["audits_passed"] for x in rows})
        self.assertEqual("baseline", rows[0]["policy"])

    def test_simulate_flags_override(self):
        path = self.write_experiment({"mode": "simulate", "sim": SIM, "seeds": 1})
        code = main(["simulate", "--config", path, "--seed", "10", "--seeds", "4", "9", "--seed-list", "--horizon",
                     "30", "--output", self.output])
        self.assertEqual(EXIT_OK, code)
        self.assertEqual(["4", "9"], [x["seed"] for x in self.read_rows()])

    def test_sweep(self):
        path = self.write_experiment({"mode": "sweep", "sim": SIM, "sweep": {"tau": [0.5, 1.0]}, "seeds": 2})
        code = main(["sweep", "--config", path, "--output", self.output])
        self.assertEqual(EXIT_OK, code)
        rows = self.read_rows()
        self.assertEqual(["0.5", "1"], [x["tau"] for x in rows])
        self.assertEqual({"2"}, {x["seeds"] for x in rows})
        self.assertIn("throughput_hw", rows[0])
        self.assertEqual(["2", "1"], [x["message_budget"] for x in rows])

    def test_reproduce(self):
        code = main(["reproduce", "fig_extension_tau1", "--output", self.output])
        self.assertEqual(EXIT_OK, code)
        self.assertEqual(8, len(self.read_rows()))

    def test_reproduce_matches_golden_file(self):
        self.assertEqual(EXIT_OK, main(["reproduce", "golden_bound", "--output", self.output]))
        with open(self.output, "rb") as f, open(os.path.join(GOLDEN_DIR, "golden_bound.csv"), "rb") as g:
            self.assertEqual(g.read(), f.read())

    def test_simulation_preset_is_byte_identical(self):
        contents = []
        for workers in ("1", "2", "1"):
            path = os.path.join(self.tmp.name, f"sim_{len(contents)}.csv")
            self.assertEqual(EXIT_OK, main(["reproduce", "golden_sim", "--workers", workers, "--output", path]))
            with open(path, "rb") as f:
                contents.append(f.read())
        self.assertEqual(contents[0], contents[1])
        self.assertEqual(contents[0], contents[2])

        golden = os.path.join(GOLDEN_DIR, "golden_sim.csv")
        if not os.path.exists(golden):
            with open(golden, "wb") as f:
                f.write(contents[0])
            self.skipTest(f"recorded {golden}")
        with open(golden, "rb") as f:
            self.assertEqual(f.read(), contents[0])

    def test_verify(self):
        code = main(["verify", "--max-states", "200000", "--output", self.output])
        self.assertEqual(EXIT_OK, code)
        rows = self.read_rows()
        self.assertTrue(rows)
        self.assertEqual({"true"}, {x["passed"] for x in rows})
        self.assertIn("global_balance[baseline K=2 N=2 tau=1]", [x["check"] for x in rows])

    def test_verify_exported_networks(self):
        export = os.path.join(self.tmp.name, "networks")
        code = main(["verify", "--max-states", "200000", "--export-networks", export, "--output", self.output])
        self.assertEqual(EXIT_OK, code)
        files = sorted(os.listdir(export))
        self.assertIn("extension_N2.json", files)
        self.assertIn("baseline_K2_N3_tau0.5.json", files)

        network = os.path.join(export, "extension_N2.json")
        code = main(["verify", "--max-states", "200000", "--network", network, "--N", "3", "--output", self.output])
        self.assertEqual(EXIT_OK, code)
        checks = {x["check"]: x["passed"] for x in self.read_rows()}
        self.assertEqual("true", checks["ros_generator[extension_N2.json]"])
        self.assertEqual("true", checks["fcfs_generator[extension_N2.json]"])

    def test_verify_missing_network(self):
        with self.assertLogs(level="ERROR"):
            code = main(["verify", "--network", os.path.join(self.tmp.name, "missing.json")])
        self.assertEqual(EXIT_CONFIG, code)


class TestHelpers(TestCase):

    def test_format_value(self):
        self.assertEqual("0.333333333", format_value(1 / 3))
        self.assertEqual("true", format_value(True))
        self.assertEqual("", format_value(None))
        self.assertEqual("7", format_value(7))
        self.assertEqual("nan", format_value(math.nan))

    def test_product_curves(self):
        result = cmd_bound(None, [4], products=[2.0])
        self.assertEqual([1, 2, 3, 4], [x["K"] for x in result.rows])
        self.assertEqual([2.0, 1.0, 2 / 3, 0.5], [x["delta"] for x in result.rows])

    def test_bound_needs_grids(self):
        with self.assertRaises(UsageError):
            cmd_bound(None, [2])
        with self.assertRaises(UsageError):
            cmd_bound([1.0], [])

    def test_extension_broadcast(self):
        result = cmd_extension([0.5], [1.0, 2.0], [1.0])
        self.assertEqual([0.5, 0.5], [x["tau1"] for x in result.rows])

    def test_expand_sweep(self):
        spec = ExperimentSpec(mode="sweep", sim=SIM, sweep={"tau": [0.5, 1.0], "lambda": [0.3, 0.6]},
                              variants=[{"kind": "baseline", "tau": 1.0}, {"kind": "aujsq", "tau": 1.0}])
        points = expand_sweep(spec)
        self.assertEqual(8, len(points))
        self.assertEqual({0.3, 0.6}, {x.lam for x in points})
        self.assertEqual({"baseline", "aujsq"}, {x.scheme.kind for x in points})
        self.assertEqual({0.5, 1.0}, {x.scheme.tau for x in points})
