"""
Test cases for low-rank adapter loading and name binding.
"""

import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from lorasweep.merging.adapters import (
    ADAPTER_CONFIG_FILE,
    ADAPTER_WEIGHTS_FILE,
    LoraAdapter,
    LoraPair,
    NameMapRule,
    load_adapter,
    match_names,
)
from lorasweep.security.exceptions import (
    MergeError,
    OrphanHalf,
    RankMismatch,
    ShapeMismatch,
    UnresolvedTarget,
)
from lorasweep.tensorstore.checkpoint import (
    CheckpointIndex,
    Tensor,
    checkpoint_bytes,
    parse_header,
)
from lorasweep.tensorstore.dtypes import DType

PREFIX = "base_model.model."


def base_index(shapes: dict) -> CheckpointIndex:
    """Index of a base checkpoint holding zero tensors of the given shapes."""
    entries = [
        (name, Tensor(np.zeros(shape, dtype=np.float32)), DType.F32)
        for name, shape in shapes.items()
    ]
    return parse_header(checkpoint_bytes(entries))


def factors(rank: int, d_out: int, d_in: int, seed: int = 0) -> tuple[Tensor, Tensor]:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((rank, d_in)).astype(np.float32)
    b = rng.standard_normal((d_out, rank)).astype(np.float32)
    return Tensor(a), Tensor(b)


def pair_tensors(module: str, a: Tensor, b: Tensor) -> dict[str, Tensor]:
    return {f"{module}.lora_A.weight": a, f"{module}.lora_B.weight": b}


class TestNameMapRule(unittest.TestCase):
    """Test module path to weight name translation."""

    def test_strips_prefix_first(self) -> None:
        """Test that the stripped name is tried before the raw one."""
        rule = NameMapRule()
        self.assertEqual(
            rule.candidates(PREFIX + "layers.0.q_proj"),
            ["layers.0.q_proj.weight", PREFIX + "layers.0.q_proj.weight"],
        )

    def test_no_prefix(self) -> None:
        """Test a module path without a known prefix."""
        self.assertEqual(NameMapRule().candidates("fc"), ["fc.weight"])


class TestLoraPair(unittest.TestCase):
    """Test LoraPair validation and the update it produces."""

    def test_delta_and_scale(self) -> None:
        """Test that delta is scale * B @ A with scale = numerator / rank."""
        a, b = factors(2, 3, 4)
        pair = LoraPair("w", a, b, rank=2, scale_numerator=4.0)
        self.assertEqual(pair.scale, 2.0)
        self.assertEqual(pair.target_shape, (3, 4))
        expected = 2.0 * (b.values.astype(np.float64) @ a.values.astype(np.float64))
        np.testing.assert_allclose(pair.delta(), expected)

    def test_rank_disagreement(self) -> None:
        """Test factors whose inner dimensions disagree."""
        a, _ = factors(2, 3, 4)
        _, b = factors(3, 3, 4)
        with self.assertRaises(RankMismatch):
            LoraPair("w", a, b, rank=2, scale_numerator=2.0)

    def test_factors_must_be_matrices(self) -> None:
        """Test that vector factors are refused."""
        vector = Tensor(np.zeros(4, dtype=np.float32))
        with self.assertRaises(ShapeMismatch):
            LoraPair("w", vector, vector, rank=1, scale_numerator=1.0)

    def test_shared_target_rejected(self) -> None:
        """Test that two pairs may not patch one weight."""
        a, b = factors(1, 2, 2)
        pair = LoraPair("w", a, b, rank=1, scale_numerator=1.0)
        with self.assertRaises(MergeError):
            LoraAdapter([pair, pair])


class TestMatchNames(unittest.TestCase):
    """Test pairing factors and binding them to base weights."""

    def setUp(self) -> None:
        self.base = base_index(
            {"layers.0.q_proj.weight": (3, 4), "layers.0.norm.weight": (4,)}
        )

    def test_binds_prefixed_module(self) -> None:
        """Test the usual adapter naming with the prefix stripped."""
        a, b = factors(2, 3, 4)
        adapter = match_names(
            self.base,
            {
                PREFIX + "layers.0.q_proj.lora_A.weight": a,
                PREFIX + "layers.0.q_proj.lora_B.weight": b,
            },
        )
        self.assertEqual(list(adapter.targets), ["layers.0.q_proj.weight"])
        pair = adapter.targets["layers.0.q_proj.weight"]
        self.assertEqual((pair.rank, pair.scale), (2, 1.0))

    def test_adapter_name_segment(self) -> None:
        """Test factor names carrying an adapter name segment."""
        a, b = factors(1, 3, 4)
        adapter = match_names(
            self.base,
            {
                "layers.0.q_proj.lora_A.default.weight": a,
                "layers.0.q_proj.lora_B.default.weight": b,
            },
            scale_numerator=8.0,
        )
        self.assertEqual(adapter.pairs[0].scale, 8.0)

    def test_orphan_half(self) -> None:
        """Test a module with only its A factor."""
        a, _ = factors(2, 3, 4)
        with self.assertRaises(OrphanHalf) as cm:
            match_names(self.base, {PREFIX + "layers.0.q_proj.lora_A.weight": a})
        self.assertEqual(cm.exception.modules, [PREFIX + "layers.0.q_proj"])

    def test_unresolved_target(self) -> None:
        """Test a module that matches no base weight."""
        a, b = factors(2, 3, 4)
        with self.assertRaises(UnresolvedTarget) as cm:
            match_names(
                self.base,
                pair_tensors("layers.9.k_proj", a, b),
            )
        self.assertIn("layers.9.k_proj.weight", str(cm.exception))

    def test_shape_mismatch(self) -> None:
        """Test an update whose shape differs from the base weight."""
        a, b = factors(2, 4, 3)
        with self.assertRaises(ShapeMismatch):
            match_names(
                self.base,
                pair_tensors("layers.0.q_proj", a, b),
            )

    def test_configured_rank_checked(self) -> None:
        """Test that the configured rank must match the factors."""
        a, b = factors(2, 3, 4)
        with self.assertRaises(RankMismatch):
            match_names(
                self.base,
                pair_tensors("layers.0.q_proj", a, b),
                expected_rank=4,
            )

    def test_non_factor_tensors_ignored(self) -> None:
        """Test that extra adapter tensors are skipped with a warning."""
        a, b = factors(2, 3, 4)
        with self.assertLogs("lorasweep.merging.adapters", level="WARNING"):
            adapter = match_names(
                self.base,
                {
                    "layers.0.q_proj.lora_A.weight": a,
                    "layers.0.q_proj.lora_B.weight": b,
                    "classifier.bias": Tensor(np.zeros(2, dtype=np.float32)),
                },
            )
        self.assertEqual(len(adapter.pairs), 1)


class TestLoadAdapter(unittest.TestCase):
    """Test reading adapters from disk."""

    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.base = base_index({"fc.weight": (3, 4)})
        a, b = factors(2, 3, 4)
        self.payload = checkpoint_bytes(
            [
                (PREFIX + "fc.lora_A.weight", a, DType.F32),
                (PREFIX + "fc.lora_B.weight", b, DType.F32),
            ]
        )

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def test_directory_with_config(self) -> None:
        """Test that lora_alpha from the config sets the scale."""
        (self.root / ADAPTER_WEIGHTS_FILE).write_bytes(self.payload)
        (self.root / ADAPTER_CONFIG_FILE).write_text(
            json.dumps({"r": 2, "lora_alpha": 16}), encoding="utf-8"
        )
        adapter = load_adapter(self.root, self.base)
        self.assertEqual(adapter.pairs[0].scale, 8.0)

    def test_directory_with_wrong_rank(self) -> None:
        """Test that a config rank disagreeing with the factors is refused."""
        (self.root / ADAPTER_WEIGHTS_FILE).write_bytes(self.payload)
        (self.root / ADAPTER_CONFIG_FILE).write_text(
            json.dumps({"r": 8, "lora_alpha": 16}), encoding="utf-8"
        )
        with self.assertRaises(RankMismatch):
            load_adapter(self.root, self.base)

    def test_bare_file(self) -> None:
        """Test that a bare adapter file has scale one."""
        path = self.root / "adapter.safetensors"
        path.write_bytes(self.payload)
        adapter = load_adapter(path, self.base)
        self.assertEqual(adapter.pairs[0].scale, 1.0)


if __name__ == "__main__":
    unittest.main()
