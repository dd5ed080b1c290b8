"""
Test cases for interpolation and low-rank rescaling.

Tests focus on endpoint exactness, untouched tensors and agreement between
the two merge paths.
"""

import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np

from lorasweep.merging.adapters import match_names
from lorasweep.merging.merge import (
    ALPHA_METADATA_KEY,
    MODE_METADATA_KEY,
    apply_lora,
    check_alpha,
    equivalence_report,
    interpolate,
    materialize,
)
from lorasweep.security.exceptions import (
    AlphaOutOfRange,
    NameSetMismatch,
    ShapeMismatch,
)
from lorasweep.tensorstore.checkpoint import CheckpointReader, Tensor, save_checkpoint
from lorasweep.tensorstore.dtypes import DType


class MergeFixture(unittest.TestCase):
    """Base checkpoint with one adapted weight, an untouched F16 norm and a bias."""

    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        rng = np.random.default_rng(7)
        self.weight = rng.standard_normal((6, 5)).astype(np.float32)
        self.base_path = self.root / "base.safetensors"
        save_checkpoint(
            self.base_path,
            [
                ("proj.weight", Tensor(self.weight), DType.F32),
                ("norm.weight", Tensor(rng.standard_normal(5)), DType.F16),
                ("proj.bias", Tensor(rng.standard_normal(6)), DType.F32),
            ],
            {"source": "fixture"},
        )
        self.a = Tensor(rng.standard_normal((2, 5)).astype(np.float32))
        self.b = Tensor(rng.standard_normal((6, 2)).astype(np.float32))
        self.base = CheckpointReader(self.base_path)
        self.adapter = match_names(
            self.base.index,
            {"proj.lora_A.weight": self.a, "proj.lora_B.weight": self.b},
            scale_numerator=4.0,
        )

    def tearDown(self) -> None:
        self.base.close()
        self.tmp.cleanup()

    def finetuned(self) -> CheckpointReader:
        path = self.root / "finetuned.safetensors"
        materialize(self.base, self.adapter).save(path)
        reader = CheckpointReader(path)
        self.addCleanup(reader.close)
        return reader


class TestCheckAlpha(unittest.TestCase):
    """Test the coefficient guard."""

    def test_range(self) -> None:
        """Test the closed unit interval and the extrapolation switch."""
        check_alpha(0.0)
        check_alpha(1.0)
        with self.assertRaises(AlphaOutOfRange):
            check_alpha(1.5)
        check_alpha(1.5, extrapolate=True)

    def test_non_finite(self) -> None:
        """Test that NaN is refused even when extrapolating."""
        with self.assertRaises(AlphaOutOfRange):
            check_alpha(float("nan"), extrapolate=True)


class TestApplyLora(MergeFixture):
    """Test rescaled low-rank merges."""

    def test_half_alpha(self) -> None:
        """Test W + alpha * s * B @ A on the adapted weight."""
        merged = apply_lora(self.base, self.adapter, 0.5)
        delta = 2.0 * (
            self.b.values.astype(np.float64) @ self.a.values.astype(np.float64)
        )
        expected = (self.weight.astype(np.float64) + 0.5 * delta).astype(np.float32)
        np.testing.assert_array_equal(merged.tensor("proj.weight").values, expected)

    def test_untargeted_tensors_byte_identical(self) -> None:
        """Test that tensors without an update keep their bytes and dtype."""
        merged = apply_lora(self.base, self.adapter, 0.7)
        by_name = {name: (tensor, dtype) for name, tensor, dtype in merged.entries}
        norm, dtype = by_name["norm.weight"]
        self.assertIs(dtype, DType.F16)
        self.assertEqual(norm.data, self.base.read_encoded("norm.weight").data)

    def test_alpha_zero_is_base(self) -> None:
        """Test that alpha 0 reproduces every base tensor bit for bit."""
        merged = apply_lora(self.base, self.adapter, 0.0)
        for name, tensor, _ in merged.entries:
            self.assertEqual(tensor.data, self.base.read_encoded(name).data)

    def test_order_and_metadata(self) -> None:
        """Test base tensor order and the merge metadata."""
        merged = apply_lora(self.base, self.adapter, 0.25)
        self.assertEqual([n for n, _, _ in merged.entries], self.base.names)
        self.assertEqual(merged.metadata["source"], "fixture")
        self.assertEqual(merged.metadata[ALPHA_METADATA_KEY], "0.25")
        self.assertEqual(merged.metadata[MODE_METADATA_KEY], "lora")

    def test_output_dtype(self) -> None:
        """Test that an explicit output dtype applies to every tensor."""
        merged = apply_lora(self.base, self.adapter, 0.5, output_dtype=DType.BF16)
        self.assertEqual({d for _, _, d in merged.entries}, {DType.BF16})

    def test_workers_do_not_change_bytes(self) -> None:
        """Test that parallel tensor merging yields the same file."""
        serial = apply_lora(self.base, self.adapter, 0.4).to_bytes()
        parallel = apply_lora(self.base, self.adapter, 0.4, workers=4).to_bytes()
        self.assertEqual(serial, parallel)


class TestInterpolate(MergeFixture):
    """Test weight interpolation between two checkpoints."""

    def test_endpoints_exact(self) -> None:
        """Test that alpha 0 and 1 copy the endpoint payloads."""
        finetuned = self.finetuned()
        at_zero = interpolate(self.base, finetuned, 0.0)
        at_one = interpolate(self.base, finetuned, 1.0)
        for name in self.base.names:
            self.assertEqual(
                at_zero.tensor(name).values.tobytes(),
                self.base.read(name).values.tobytes(),
            )
            self.assertEqual(
                at_one.tensor(name).values.tobytes(),
                finetuned.read(name).values.tobytes(),
            )

    def test_midpoint(self) -> None:
        """Test the elementwise blend at alpha 0.5."""
        finetuned = self.finetuned()
        merged = interpolate(self.base, finetuned, 0.5)
        expected = (
            0.5 * self.weight.astype(np.float64)
            + 0.5 * finetuned.read("proj.weight").values.astype(np.float64)
        ).astype(np.float32)
        np.testing.assert_array_equal(merged.tensor("proj.weight").values, expected)
        self.assertEqual(merged.metadata[MODE_METADATA_KEY], "interp")

    def test_name_set_mismatch(self) -> None:
        """Test checkpoints with different tensor names."""
        other_path = self.root / "other.safetensors"
        save_checkpoint(
            other_path,
            [("proj.weight", Tensor(self.weight), DType.F32)],
        )
        with CheckpointReader(other_path) as other:
            with self.assertRaises(NameSetMismatch) as cm:
                interpolate(self.base, other, 0.5)
        self.assertEqual(cm.exception.only_in_base, ["norm.weight", "proj.bias"])
        self.assertEqual(cm.exception.only_in_other, [])

    def test_shape_mismatch(self) -> None:
        """Test a tensor whose shape differs between the checkpoints."""
        other_path = self.root / "other.safetensors"
        save_checkpoint(
            other_path,
            [
                ("proj.weight", Tensor(self.weight.T.copy()), DType.F32),
                ("norm.weight", Tensor(np.zeros(5)), DType.F16),
                ("proj.bias", Tensor(np.zeros(6)), DType.F32),
            ],
        )
        with CheckpointReader(other_path) as other:
            with self.assertRaises(ShapeMismatch):
                interpolate(self.base, other, 0.5)


class TestEquivalence(MergeFixture):
    """Test that interpolation and rescaling agree."""

    def test_report(self) -> None:
        """Test deviations below 1e-5 and exact zeros at the endpoints."""
        alphas = [0.0, 0.25, 0.4, 0.5, 0.7, 1.0]
        rows = equivalence_report(self.base, self.adapter, alphas)
        self.assertEqual([r.alpha for r in rows], alphas)
        for row in rows:
            self.assertLessEqual(row.max_abs, 1e-5)
            self.assertEqual(row.worst_tensor, "proj.weight")
        self.assertEqual((rows[0].max_abs, rows[-1].max_abs), (0.0, 0.0))

    def test_report_matches_files(self) -> None:
        """Test the report against merges computed through both paths."""
        finetuned = self.finetuned()
        via_interp = interpolate(self.base, finetuned, 0.7).tensor("proj.weight")
        via_lora = apply_lora(self.base, self.adapter, 0.7).tensor("proj.weight")
        (row,) = equivalence_report(self.base, self.adapter, [0.7])
        observed = np.max(
            np.abs(
                via_interp.values.astype(np.float64)
                - via_lora.values.astype(np.float64)
            )
        )
        self.assertEqual(row.max_abs, float(observed))

    def test_report_follows_merge_code(self) -> None:
        """Test that a drifting rescale path shows up in the report."""

        def drifting(base, delta, alpha):
            return (base.astype(np.float64) + alpha * delta + 0.01).astype(np.float32)

        with mock.patch("lorasweep.merging.merge.rescale_values", drifting):
            rows = equivalence_report(self.base, self.adapter, [0.0, 0.5, 1.0])
        self.assertEqual(rows[0].max_abs, 0.0)
        self.assertGreater(rows[1].max_abs, 1e-3)
        self.assertEqual(rows[1].worst_tensor, "proj.weight")


class TestLinearity(MergeFixture):
    """Test that the change from the base grows linearly with alpha."""

    ALPHAS = (0.1, 0.25, 0.5, 0.75, 0.9)

    def check_linear(self, merge, full) -> None:
        for alpha in self.ALPHAS:
            merged = merge(alpha)
            for name in self.base.names:
                with self.subTest(alpha=alpha, tensor=name):
                    base = self.base.read(name).values.astype(np.float64)
                    step = merged.tensor(name).values - base
                    whole = full.read(name).values - base
                    np.testing.assert_allclose(step, alpha * whole, rtol=0, atol=1e-5)

    def test_interpolation(self) -> None:
        """Test delta(alpha) = alpha * delta(1) along interpolation."""
        finetuned = self.finetuned()
        self.check_linear(
            lambda alpha: interpolate(self.base, finetuned, alpha), finetuned
        )

    def test_rescaling(self) -> None:
        """Test delta(alpha) = alpha * delta(1) along rescaling."""
        self.check_linear(
            lambda alpha: apply_lora(self.base, self.adapter, alpha), self.finetuned()
        )


class TestNonFiniteValues(MergeFixture):
    """Test NaN and infinities in the base weights at a middle alpha."""

    def setUp(self) -> None:
        super().setUp()
        weight = self.weight.copy()
        weight[0, 0], weight[1, 1], weight[2, 2] = np.nan, np.inf, -np.inf
        bias = np.array([np.nan, np.inf, -np.inf, 0.0, 1.0, 2.0], dtype=np.float32)
        path = self.root / "special.safetensors"
        save_checkpoint(
            path,
            [
                ("proj.weight", Tensor(weight), DType.F32),
                ("proj.bias", Tensor(bias), DType.F32),
            ],
        )
        self.special = CheckpointReader(path)
        self.addCleanup(self.special.close)
        self.special_adapter = match_names(
            self.special.index,
            {"proj.lora_A.weight": self.a, "proj.lora_B.weight": self.b},
            scale_numerator=4.0,
        )
        ft_path = self.root / "special-ft.safetensors"
        materialize(self.special, self.special_adapter).save(ft_path)
        self.special_ft = CheckpointReader(ft_path)
        self.addCleanup(self.special_ft.close)

    def check_special(self, merged) -> None:
        out = self.root / "merged.safetensors"
        merged.save(out)
        with CheckpointReader(out) as reader:
            weight = reader.read("proj.weight").values
            bias = reader.read("proj.bias").values
        self.assertTrue(np.isnan(weight[0, 0]))
        self.assertEqual(weight[1, 1], np.inf)
        self.assertEqual(weight[2, 2], -np.inf)
        self.assertEqual(np.isfinite(weight).sum(), weight.size - 3)
        self.assertTrue(np.isnan(bias[0]))
        self.assertEqual(list(bias[1:]), [np.inf, -np.inf, 0.0, 1.0, 2.0])

    def test_interpolation(self) -> None:
        """Test that interpolation keeps NaN and both infinities."""
        self.check_special(interpolate(self.special, self.special_ft, 0.5))

    def test_rescaling(self) -> None:
        """Test that rescaling keeps NaN and both infinities."""
        self.check_special(apply_lora(self.special, self.special_adapter, 0.5))

    def test_report_stays_finite(self) -> None:
        """Test that matching non-finite values do not poison the report."""
        (row,) = equivalence_report(self.special, self.special_adapter, [0.5])
        self.assertTrue(np.isfinite(row.max_abs))
        self.assertLessEqual(row.max_abs, 1e-5)


if __name__ == "__main__":
    unittest.main()
