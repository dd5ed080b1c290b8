"""
Test cases for configuration loading and overrides.
"""

import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from lorasweep.security.exceptions import ConfigError
from lorasweep.utils.config import (
    ENDPOINT_URL_ENV,
    EndpointSettings,
    MergeSettings,
    ReportSettings,
    RunSettings,
    ScoreSettings,
    SweepSettings,
    ToolkitConfig,
    format_alpha,
)

STUDY = """
[sweep]
base = "models/base.safetensors"
other = "adapters/walrus"
mode = "lora"
alphas = [0.0, 0.25, 1.0]
out = "sweep"

[endpoint]
base_url = "http://localhost:8000"
max_retries = 1

[run]
manifest = "/data/eval.jsonl"
kinds = ["common", "combined"]
k = 2
pool = "pool.jsonl"

[score]
threshold = 4

[report]
inputs = ["scores/metrics.json"]
compare_alphas = [0.0, 1.0]
"""


class TestSettings(unittest.TestCase):
    """Test validation of individual sections."""

    def test_defaults(self) -> None:
        """Test the documented defaults."""
        config = ToolkitConfig()
        self.assertEqual(config.sweep.alphas, [0.0, 0.5, 1.0])
        self.assertEqual(config.merge.mode, "interp")
        self.assertEqual(config.score.threshold, 5)
        self.assertEqual(config.run.kinds, ["common"])
        self.assertEqual(config.endpoint.path, "/v1/chat/completions")

    def test_invalid_values(self) -> None:
        """Test values each section refuses."""
        cases = [
            lambda: MergeSettings(mode="average"),
            lambda: MergeSettings(workers=0),
            lambda: SweepSettings(output_naming="merged.safetensors"),
            lambda: RunSettings(k=-1),
            lambda: RunSettings(kinds=[]),
            lambda: RunSettings(concurrency=0),
            lambda: ScoreSettings(threshold=0),
            lambda: ReportSettings(compare_alphas=[0.5]),
            lambda: EndpointSettings(max_tokens=0),
            lambda: EndpointSettings(timeout=0),
        ]
        for make in cases:
            with self.subTest(case=make):
                with self.assertRaises(ConfigError):
                    make()

    def test_model_for(self) -> None:
        """Test the alpha placeholder in served model names."""
        settings = EndpointSettings(model="walrus-{alpha}")
        self.assertEqual(settings.model_for(0.25), "walrus-0.25")
        self.assertEqual(settings.model_for(1.0), "walrus-1")

    def test_base_url_from_environment(self) -> None:
        """Test the environment fallback and trailing slash removal."""
        with mock.patch.dict(os.environ, {ENDPOINT_URL_ENV: "http://host:9/"}):
            self.assertEqual(EndpointSettings().resolved_base_url(), "http://host:9")
        with mock.patch.dict(os.environ, {}, clear=True):
            with self.assertRaises(ConfigError):
                EndpointSettings().resolved_base_url()

    def test_format_alpha(self) -> None:
        """Test short stable alpha text."""
        self.assertEqual(format_alpha(0.0), "0")
        self.assertEqual(format_alpha(0.5), "0.5")
        self.assertEqual(format_alpha(1), "1")
        self.assertEqual(format_alpha(1 / 3), "0.3333333333333333")
        self.assertEqual(format_alpha(1e-05), "1e-05")

    def test_format_alpha_distinct(self) -> None:
        """Test that nearby alphas never share a name."""
        alphas = [0.12345, 0.12346, 0.1234500001, 0.1, 0.10000000000000002]
        self.assertEqual(len({format_alpha(a) for a in alphas}), len(alphas))
        for alpha in alphas:
            self.assertEqual(float(format_alpha(alpha)), alpha)

    def test_model_names_distinct(self) -> None:
        """Test that nearby alphas address different served models."""
        settings = EndpointSettings(base_url="http://stub")
        self.assertNotEqual(settings.model_for(0.12345), settings.model_for(0.12346))
        self.assertEqual(settings.model_for(0.12345), "merged-alpha0.12345")


class TestToolkitConfig(unittest.TestCase):
    """Test whole-study configuration files."""

    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name).resolve()
        self.path = self.root / "study.toml"
        self.path.write_text(STUDY, encoding="utf-8")

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def test_from_toml(self) -> None:
        """Test section values and relative path resolution."""
        config = ToolkitConfig.from_toml(self.path)
        self.assertEqual(config.sweep.mode, "lora")
        self.assertEqual(config.sweep.alphas, [0.0, 0.25, 1.0])
        self.assertEqual(
            config.sweep.base, str(self.root / "models" / "base.safetensors")
        )
        self.assertEqual(config.run.manifest, "/data/eval.jsonl")
        self.assertEqual(config.run.pool, str(self.root / "pool.jsonl"))
        self.assertEqual(
            config.report.inputs, [str(self.root / "scores" / "metrics.json")]
        )
        self.assertEqual(config.endpoint.max_retries, 1)
        self.assertEqual(config.score.threshold, 4)

    def test_unknown_section(self) -> None:
        """Test that misspelled sections are reported."""
        with self.assertRaises(ConfigError) as cm:
            ToolkitConfig.from_mapping({"sweeep": {}})
        self.assertIn("sweeep", str(cm.exception))

    def test_unknown_key(self) -> None:
        """Test that misspelled keys are reported with the valid ones."""
        with self.assertRaises(ConfigError) as cm:
            ToolkitConfig.from_mapping({"score": {"treshold": 3}})
        self.assertIn("treshold", str(cm.exception))
        self.assertIn("threshold", str(cm.exception))

    def test_logger_not_configurable(self) -> None:
        """Test that non-serialized fields are not accepted as keys."""
        with self.assertRaises(ConfigError):
            ToolkitConfig.from_mapping({"endpoint": {"logger": "x"}})

    def test_section_must_be_table(self) -> None:
        """Test a section given as a scalar."""
        with self.assertRaises(ConfigError):
            ToolkitConfig.from_mapping({"run": 3})

    def test_invalid_toml(self) -> None:
        """Test a file that is not TOML."""
        self.path.write_text("[sweep\n", encoding="utf-8")
        with self.assertRaises(ConfigError):
            ToolkitConfig.from_toml(self.path)

    def test_missing_file(self) -> None:
        """Test a config path that does not exist."""
        with self.assertRaises(ConfigError):
            ToolkitConfig.from_toml(self.root / "absent.toml")

    def test_overrides(self) -> None:
        """Test that flags replace file values and None leaves them."""
        config = ToolkitConfig.from_toml(self.path)
        updated = config.with_overrides("score", threshold=6, labels=None)
        self.assertEqual(updated.score.threshold, 6)
        self.assertEqual(config.score.threshold, 4)
        self.assertIs(config.with_overrides("score", threshold=None), config)

    def test_override_validated(self) -> None:
        """Test that overrides go through section validation."""
        with self.assertRaises(ConfigError):
            ToolkitConfig().with_overrides("score", threshold=0)

    def test_to_dict(self) -> None:
        """Test the serializable form of a configuration."""
        data = ToolkitConfig.from_toml(self.path).to_dict()
        self.assertEqual(
            set(data),
            {"merge", "sweep", "endpoint", "run", "score", "report", "limits"},
        )
        self.assertNotIn("logger", data["endpoint"])
        self.assertEqual(data["run"]["kinds"], ["common", "combined"])


if __name__ == "__main__":
    unittest.main()
