"""
Test cases for scoring whole evaluation sets from files.

These tests ensure that judged word-problem style outputs, a two-class
closed-set benchmark and the distance threshold give the expected metrics
when run through the score command.
"""

import io
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

from lorasweep.harness.manifest import RunRecord, append_records
from lorasweep.scoring.pipeline import (
    METRICS_JSON,
    SCORES_FILE,
    load_metrics,
    read_jsonl,
    write_jsonl,
)
from lorasweep.utils.cli import main

MARINE_SAMPLES = [
    {
        "sample_id": "wm-1",
        "dataset": "watkins",
        "scientific_name": "Odobenus rosmarus",
        "common_name": "Walrus",
        "audio_ref": "clips/wm-1.wav",
    },
    {
        "sample_id": "wm-2",
        "dataset": "watkins",
        "scientific_name": "Eubalaena australis",
        "common_name": "Southern Right Whale",
        "audio_ref": "clips/wm-2.wav",
    },
    {
        "sample_id": "wm-3",
        "dataset": "watkins",
        "scientific_name": "Lagenodelphis hosei",
        "common_name": "Frasers Dolphin",
        "audio_ref": "clips/wm-3.wav",
    },
    {
        "sample_id": "wm-4",
        "dataset": "watkins",
        "scientific_name": "Stenella clymene",
        "common_name": "Clymene Dolphin",
        "audio_ref": "clips/wm-4.wav",
    },
]

# (sample_id, prompt kind, response, judged correct)
MARINE_RESPONSES = [
    ("wm-1", "common", "Walrus", True),
    ("wm-1", "scientific", "Odobenus rosmarus", True),
    ("wm-1", "combined", "Odobenus rosmarus - male courtship behavior", False),
    ("wm-2", "common", "Fin- Finback Whale", False),
    ("wm-2", "scientific", "Balaenoptera physalus", False),
    ("wm-2", "combined", "Balaenoptera physalus: 52 Hz Pulses", False),
    ("wm-3", "common", "Fraser's Dolphin", True),
    ("wm-3", "scientific", "Lagenodelphis hosei", True),
    ("wm-3", "combined", "Lagenodelphis hosei", False),
    ("wm-4", "common", "Clymene Dolphin", True),
    ("wm-4", "scientific", "Stenella clymene", True),
    ("wm-4", "combined", "Stenella clymene: Clymene Dolphin", True),
]

ELACHURA = "Spotted Elachura"
PORPOISE = "Dall's Porpoise"


def invoke(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def closed_set_rows() -> list[dict]:
    """Two-class benchmark: 73 elachura and 52 porpoise recordings."""
    plan = [
        (ELACHURA, [(ELACHURA, 60), (PORPOISE, 5), ("Great Tit", 5), ("", 3)]),
        (PORPOISE, [(PORPOISE, 40), (ELACHURA, 5), ("Great Tit", 5), ("", 2)]),
    ]
    rows = []
    for truth, outputs in plan:
        for output, count in outputs:
            for _ in range(count):
                rows.append(
                    {
                        "sample_id": f"xc-{len(rows):03d}",
                        "output_text": output or "I don't know",
                        "truth": truth,
                        "task_kind": "closed_set",
                        "alpha": 1.0,
                        "dataset": "xeno-canto",
                    }
                )
    return rows


class FixtureTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self) -> None:
        self.tmp.cleanup()


class TestMarineMammalOutputs(FixtureTestCase):
    """Test free-form answers to the three naming prompts."""

    def setUp(self) -> None:
        super().setUp()
        self.manifest = self.root / "manifest.jsonl"
        write_jsonl(self.manifest, MARINE_SAMPLES)
        self.run_file = self.root / "run.jsonl"
        append_records(
            self.run_file,
            [
                RunRecord(
                    sample_id=sample_id,
                    alpha=1.0,
                    kind=kind,
                    prompt_text=f"<audio> {kind} prompt",
                    permutation_seed=None,
                    response_text=response,
                    endpoint="http://localhost:8000",
                )
                for sample_id, kind, response, _ in MARINE_RESPONSES
            ],
        )
        self.out = self.root / "scores"
        self.code, self.stdout, _ = invoke(
            "score",
            "--input", str(self.run_file),
            "--manifest", str(self.manifest),
            "--out", str(self.out),
        )

    def test_per_sample_judgments(self) -> None:
        """Test each response against its expected verdict."""
        self.assertEqual(self.code, 0)
        judged = {
            (row["sample_id"], row["task_kind"]): row["category"] == "correct"
            for row in read_jsonl(self.out / SCORES_FILE)
        }
        expected = {(s, k): ok for s, k, _, ok in MARINE_RESPONSES}
        self.assertEqual(judged, expected)

    def test_accuracy_per_prompt(self) -> None:
        """Test three in four correct for single names and one for combined."""
        metrics = {m["task_kind"]: m for m in load_metrics(self.out / METRICS_JSON)}
        self.assertEqual(metrics["common"]["accuracy"], 0.75)
        self.assertEqual(metrics["scientific"]["accuracy"], 0.75)
        self.assertEqual(metrics["combined"]["accuracy"], 0.25)
        self.assertIn(
            "alpha=1.0 kind=combined dataset=watkins n=4 accuracy=0.2500", self.stdout
        )

    def test_near_miss_spelling(self) -> None:
        """Test that an apostrophe is within the threshold."""
        rows = read_jsonl(self.out / SCORES_FILE)
        fraser = next(
            r for r in rows if (r["sample_id"], r["task_kind"]) == ("wm-3", "common")
        )
        self.assertEqual(fraser["distance"], 1)
        self.assertEqual(fraser["matched_class"], "Frasers Dolphin")

    def test_partial_combined_answer(self) -> None:
        """Test that a bare scientific name misses the combined target."""
        rows = read_jsonl(self.out / SCORES_FILE)
        partial = next(
            r for r in rows if (r["sample_id"], r["task_kind"]) == ("wm-3", "combined")
        )
        self.assertEqual(partial["category"], "out_of_set")
        self.assertEqual(partial["distance"], 17)


class TestClosedSetBenchmark(FixtureTestCase):
    """Test a 125-recording two-class benchmark with every error kind."""

    def setUp(self) -> None:
        super().setUp()
        self.rows = self.root / "rows.jsonl"
        write_jsonl(self.rows, closed_set_rows())
        self.labels = self.root / "labels.txt"
        self.labels.write_text(
            f"# xeno-canto subset\n{ELACHURA}\n{PORPOISE}\n", encoding="utf-8"
        )
        self.out = self.root / "scores"
        code, _, _ = invoke(
            "score",
            "--input", str(self.rows),
            "--labels", str(self.labels),
            "--kind", "closed_set",
            "--out", str(self.out),
        )
        self.assertEqual(code, 0)
        (self.metrics,) = load_metrics(self.out / METRICS_JSON)

    def test_accuracy_and_rates(self) -> None:
        """Test accuracy and the four category rates."""
        self.assertEqual(self.metrics["n"], 125)
        self.assertAlmostEqual(self.metrics["accuracy"], 0.8)
        rates = self.metrics["category_rates"]
        self.assertAlmostEqual(rates["correct"], 0.8)
        self.assertAlmostEqual(rates["in_set_confusion"], 0.08)
        self.assertAlmostEqual(rates["out_of_set"], 0.08)
        self.assertAlmostEqual(rates["abstention"], 0.04)
        self.assertAlmostEqual(sum(rates.values()), 1.0)

    def test_macro_f1(self) -> None:
        """Test per-class F1 and their unweighted mean."""
        per_class = self.metrics["per_class"]
        self.assertAlmostEqual(per_class[ELACHURA]["f1"], 20 / 23)
        self.assertAlmostEqual(per_class[PORPOISE]["f1"], 80 / 97)
        self.assertEqual(per_class[ELACHURA]["support"], 73)
        self.assertAlmostEqual(self.metrics["macro_f1"], (20 / 23 + 80 / 97) / 2)


class TestThresholdBoundary(FixtureTestCase):
    """Test the strict distance threshold end to end."""

    def score(self, threshold: int) -> str:
        rows = self.root / "rows.jsonl"
        write_jsonl(
            rows,
            [
                {
                    "sample_id": "s1",
                    "output_text": "Wa",
                    "truth": "Walrus",
                    "task_kind": "common",
                }
            ],
        )
        out = self.root / f"t{threshold}"
        code, _, _ = invoke(
            "score",
            "--input", str(rows),
            "--threshold", str(threshold),
            "--out", str(out),
        )
        self.assertEqual(code, 0)
        (row,) = read_jsonl(out / SCORES_FILE)
        self.assertEqual(row["distance"], 4)
        return row["category"]

    def test_distance_four(self) -> None:
        """Test that distance 4 matches at threshold 5 but not at 4."""
        self.assertEqual(self.score(5), "correct")
        self.assertEqual(self.score(4), "out_of_set")

    def test_threshold_from_config(self) -> None:
        """Test the threshold read from a configuration file."""
        config = self.root / "study.toml"
        config.write_text("[score]\nthreshold = 4\n", encoding="utf-8")
        rows = self.root / "rows.jsonl"
        write_jsonl(
            rows,
            [
                {
                    "sample_id": "s1",
                    "output_text": "Wa",
                    "truth": "Walrus",
                    "task_kind": "common",
                }
            ],
        )
        out = self.root / "configured"
        code, _, _ = invoke(
            "score", "-c", str(config), "--input", str(rows), "--out", str(out)
        )
        self.assertEqual(code, 0)
        (row,) = read_jsonl(out / SCORES_FILE)
        self.assertEqual(row["category"], "out_of_set")


if __name__ == "__main__":
    unittest.main()
