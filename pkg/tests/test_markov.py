from __future__ import annotations

import math
from fractions import Fraction

import pytest

from core.errors import GroupoidMismatch, NoConvergence
from core.groupoid import UnitSet, pair_arrow
from core.kernels import convolve, involution, uniform_field
from core.markov import (
    L2Vector,
    apply,
    assemble,
    export_coo,
    norm_sandwich_report,
    operator_norm,
    operator_norm_p,
    recover_kernel,
)
from utils.output_tools import RunManifest, read_manifest_line


def test_entries_follow_kernel_on_fibers(s2, s2_drift):
    op = assemble(s2, s2_drift)
    ab, ba, aa = pair_arrow(s2, 0, 1), pair_arrow(s2, 1, 0), pair_arrow(s2, 0, 0)
    # M[g, g'] = π(g⁻¹g')
    assert op.entries[(aa, aa)] == 1
    assert op.entries[(ba, ba)] == 1
    assert (aa, ab) not in op.entries


def test_operator_of_convolution_is_product(s2, s2_uniform, s2_drift):
    left = assemble(s2, convolve(s2_drift, s2_uniform)).exact_matrix()
    right = assemble(s2, s2_drift).exact_matrix() * assemble(s2, s2_uniform).exact_matrix()
    assert left.to_Matrix() == right.to_Matrix()


def test_involution_gives_weighted_adjoint(s2, s2_drift):
    op = assemble(s2, s2_drift)
    assert assemble(s2, involution(s2_drift)).entries == op.exact_adjoint_entries()


def test_recover_kernel_inverts_assembly(s2, s2_drift):
    assert recover_kernel(assemble(s2, s2_drift)).equals(s2_drift)


def test_norm_sandwich_on_uniform_pair(s2, s2_uniform):
    report = norm_sandwich_report(s2, s2_uniform)
    assert report.l2_norm == pytest.approx(math.sqrt(0.5))
    assert report.operator_norm == pytest.approx(1.0)
    assert report.i_norm == pytest.approx(1.0)
    assert report.ordered


def test_power_method_agrees_with_exact(s3):
    op = assemble(s3, uniform_field(s3))
    exact = operator_norm(op, "exact").value
    power = operator_norm(op, "power", tol=1e-13).value
    assert exact == pytest.approx(1.0)
    assert power == pytest.approx(exact, abs=1e-8)
    assert op.self_adjointness_defect() < 1e-12


def test_power_method_reports_no_convergence(s3):
    op = assemble(s3, uniform_field(s3))
    with pytest.raises(NoConvergence) as info:
        operator_norm(op, "power", max_iter=1)
    assert info.value.best_lower_bound <= 1.0 + 1e-12


def test_lp_norms_of_markov_operator(s2, s2_uniform, s2_drift):
    assert operator_norm_p(assemble(s2, s2_uniform), math.inf) == 1
    assert operator_norm_p(assemble(s2, s2_uniform), 1) == 1
    # L^∞ siempre vale 1 para un campo; L¹ ve las fibras de origen
    assert operator_norm_p(assemble(s2, s2_drift), math.inf) == 1
    assert operator_norm_p(assemble(s2, s2_drift), 1) == 2


def test_apply_fixes_constants(s2, s2_drift):
    one = L2Vector.constant(s2, "rational")
    assert apply(assemble(s2, s2_drift), one).values == one.values


def test_return_vector_of_uniform_pair(s2, s2_uniform):
    chi = L2Vector.indicator(s2, UnitSet.everything(s2), "rational")
    image = apply(assemble(s2, s2_uniform), chi)
    # P χ vale 1/2 en cada flecha; ⟨Pχ, χ⟩ = Σ_x μ(x)/2
    assert image.inner(chi) == Fraction(1, 2)


def test_assemble_rejects_foreign_kernel(s2, s3):
    with pytest.raises(GroupoidMismatch):
        assemble(s2, uniform_field(s3))


def test_export_coo_carries_manifest(s2, s2_uniform, tmp_path):
    manifest = RunManifest(command="norm", precision="rational")
    destination = tmp_path / "coo.csv"
    text = export_coo(assemble(s2, s2_uniform), destination, manifest)
    assert destination.read_text(encoding="utf-8") == text
    assert read_manifest_line(text)["command"] == "norm"
    lines = text.splitlines()
    assert lines[1] == "row_arrow,col_arrow,value"
    assert len(lines) == 2 + 8
