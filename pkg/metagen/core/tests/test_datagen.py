"""Tests for dataset synthesis, splitting and the JSON-lines dataset file."""

import json

import numpy as np
import pytest
from django.test import SimpleTestCase
from scipy import stats

from metagen.core.autodiff.checkpoint import file_sha256
from metagen.core.errors import DatasetParseError, DomainError, SchemaVersionError
from metagen.core.services.datagen import (
    BRANCH_ORDER,
    DENSITY_RANGE,
    LEVER_LENGTH,
    R_MAX_CONTACT,
    R_MAX_OUTER,
    R_MIN_CONTACT,
    R_MIN_EXT_FIRST,
    R_MIN_INNER,
    X_RANGE,
    Branch,
    DatasetConfig,
    branch_counts,
    build_dataset,
    load_dataset,
    sample_radii,
    sample_record,
    save_dataset,
    split_dataset,
    to_arrays,
)
from metagen.core.services.domain import PARAM_FIELDS, THICKNESS, equilibrium_mass
from metagen.core.services.metrics import contact_error, performance_error
from metagen.core.tests.pipeline_helpers import TempDirMixin


class BuildDatasetTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.records = build_dataset(DatasetConfig(n_records=20000, seed=0))
        cls.arrays = to_arrays(cls.records)

    def test_default_size_and_branch_balance(self):
        assert len(self.records) == 20000
        counts = {branch: sum(r.branch == branch for r in self.records) for branch in Branch}
        assert counts == branch_counts(20000)

    def test_contact_constraint_holds_exactly(self):
        assert (contact_error(self.arrays.params) == 0.0).all()

    def test_every_record_is_in_equilibrium(self):
        relative = np.abs(performance_error(self.arrays.params, self.arrays)) / (self.arrays.m_cube * self.arrays.x)

        assert relative.max() < 1e-6

    def test_thickness_margins_and_ranges(self):
        p = self.arrays.params

        assert (p.r_ext1 - p.r_int1 >= THICKNESS).all()
        assert (p.r_ext2 - p.r_int2 >= THICKNESS).all()
        assert (p.r_int2 > 0).all()
        for density in (p.d1, p.d2):
            assert ((density >= DENSITY_RANGE[0]) & (density <= DENSITY_RANGE[1])).all()
        np.testing.assert_allclose(self.arrays.x + self.arrays.y, LEVER_LENGTH)

    def test_uniform_draws_pass_a_ks_test(self):
        x_test = stats.kstest(self.arrays.x, "uniform", args=(X_RANGE[0], X_RANGE[1] - X_RANGE[0]))
        d1_test = stats.kstest(
            self.arrays.params.d1, "uniform", args=(DENSITY_RANGE[0], DENSITY_RANGE[1] - DENSITY_RANGE[0])
        )

        assert x_test.pvalue > 1e-3
        assert d1_test.pvalue > 1e-3

    def test_same_seed_same_records_other_seed_differs(self):
        again = build_dataset(DatasetConfig(n_records=300, seed=5))
        other = build_dataset(DatasetConfig(n_records=300, seed=6))

        assert again == build_dataset(DatasetConfig(n_records=300, seed=5))
        assert again != other

    def test_config_rejects_empty_dataset(self):
        with pytest.raises(DomainError):
            DatasetConfig(n_records=0)


class BranchCountsTest(SimpleTestCase):
    def test_remainder_goes_round_robin(self):
        assert branch_counts(7) == {Branch.EXT_FIRST: 3, Branch.CONTACT_FIRST: 2, Branch.INT_FIRST: 2}
        assert branch_counts(2) == {Branch.EXT_FIRST: 1, Branch.CONTACT_FIRST: 1, Branch.INT_FIRST: 0}


class SplitDatasetTest(SimpleTestCase):
    def test_split_is_disjoint_deterministic_and_ninety_ten(self):
        records = build_dataset(DatasetConfig(n_records=200, seed=1))

        train, validation = split_dataset(records, seed=1)

        assert len(validation) == 20
        assert len(train) == 180
        assert not {id(r) for r in train} & {id(r) for r in validation}
        assert split_dataset(records, seed=1) == (train, validation)

    def test_single_record_has_no_validation_part(self):
        records = build_dataset(DatasetConfig(n_records=1, seed=1))

        assert split_dataset(records, seed=1) == (records, [])


class DatasetFileTest(TempDirMixin, SimpleTestCase):
    def write(self, lines: list[str]):
        path = self.tmp / "data.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def test_save_then_load_keeps_every_record(self):
        records = build_dataset(DatasetConfig(n_records=50, seed=2))
        path = save_dataset(records, self.tmp / "train.jsonl", seed=2)

        loaded = load_dataset(path)

        assert loaded.records == records
        assert loaded.seed == 2
        assert loaded.warnings == []

    def test_same_seed_writes_identical_bytes(self):
        first = save_dataset(build_dataset(DatasetConfig(n_records=40, seed=7)), self.tmp / "a.jsonl", seed=7)
        second = save_dataset(build_dataset(DatasetConfig(n_records=40, seed=7)), self.tmp / "b.jsonl", seed=7)

        assert file_sha256(first) == file_sha256(second)

    def test_truncated_file_names_the_line(self):
        path = save_dataset(build_dataset(DatasetConfig(n_records=5, seed=2)), self.tmp / "t.jsonl", seed=2)
        lines = path.read_text(encoding="utf-8").splitlines()
        lines[3] = lines[3][: len(lines[3]) // 2]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

        with pytest.raises(DatasetParseError) as excinfo:
            load_dataset(path)

        assert excinfo.value.line_number == 4

    def test_missing_records_are_reported(self):
        path = save_dataset(build_dataset(DatasetConfig(n_records=5, seed=2)), self.tmp / "t.jsonl", seed=2)
        lines = path.read_text(encoding="utf-8").splitlines()
        path.write_text("\n".join(lines[:-2]) + "\n", encoding="utf-8")

        with pytest.raises(DatasetParseError, match="expected 5 records"):
            load_dataset(path)

    def test_unknown_schema_version(self):
        path = self.write([json.dumps({"schema_version": 99, "seed": 0, "n_records": 0})])

        with pytest.raises(SchemaVersionError):
            load_dataset(path)

    def test_inconsistent_mass_is_a_warning_not_an_error(self):
        record = build_dataset(DatasetConfig(n_records=1, seed=3))[0]
        row = dict(zip(PARAM_FIELDS, record.params.as_tuple(), strict=True))
        row.update(x=record.cond.x, y=record.cond.y, m_cube=record.cond.m_cube * 1.5, branch=str(record.branch))
        header = {"schema_version": 1, "seed": 3, "n_records": 1, "n_points": 30}
        path = self.write([json.dumps(header), json.dumps(row)])

        with self.assertLogs("metagen.core.services.datagen", level="WARNING"):
            loaded = load_dataset(path)

        assert len(loaded.records) == 1
        assert len(loaded.warnings) == 1
        assert "m_cube inconsistent" in loaded.warnings[0]
        assert loaded.records[0].cond.m_cube != equilibrium_mass(record.params, record.cond.x, record.cond.y)

    def test_undecodable_bytes_name_the_line(self):
        path = self.write([json.dumps({"schema_version": 1, "seed": 0, "n_records": 1})])
        path.write_bytes(path.read_bytes() + b'{"r_ext1": \xff}\n')

        with pytest.raises(DatasetParseError, match="not valid UTF-8") as excinfo:
            load_dataset(path)

        assert excinfo.value.line_number == 2

    def test_unreadable_path_is_a_parse_error(self):
        with pytest.raises(DatasetParseError, match="cannot read file"):
            load_dataset(self.tmp)


class SampleRadiiTest(SimpleTestCase):
    def test_every_branch_respects_the_bounds(self):
        rng = np.random.default_rng(11)
        for branch in Branch:
            for _ in range(2000):
                r_ext1, r_int1, r_ext2, r_int2 = sample_radii(branch, rng)

                assert r_int1 == r_ext2, branch
                assert R_MIN_INNER <= r_int2, branch
                assert r_ext2 - r_int2 >= THICKNESS, branch
                assert r_ext2 <= R_MAX_CONTACT, branch
                assert r_ext1 - r_int1 >= THICKNESS, branch
                assert r_ext1 <= R_MAX_OUTER, branch


@pytest.mark.slow
class SamplingDistributionTest(SimpleTestCase):
    """Large-sample checks of the radius and density draws (10^5 per branch)."""

    DRAWS = 100_000
    # Range of the radius each branch draws first, and its position in the sample_radii tuple.
    ANCHORS = {
        Branch.EXT_FIRST: (0, R_MIN_EXT_FIRST, R_MAX_OUTER),
        Branch.CONTACT_FIRST: (1, R_MIN_CONTACT, R_MAX_CONTACT),
        Branch.INT_FIRST: (3, R_MIN_INNER, R_MAX_CONTACT - THICKNESS),
    }

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        rng = np.random.default_rng(2024)
        cls.radii = {branch: np.array([sample_radii(branch, rng) for _ in range(cls.DRAWS)]) for branch in Branch}

    def test_first_sampled_radius_is_uniform_per_branch(self):
        for branch, (column, low, high) in self.ANCHORS.items():
            result = stats.kstest(self.radii[branch][:, column], "uniform", args=(low, high - low))

            assert result.statistic < 0.02, branch

    def test_radii_reach_their_range_endpoints(self):
        pooled = np.concatenate(list(self.radii.values()))
        r_ext1, r_contact, r_int2 = pooled[:, 0], pooled[:, 1], pooled[:, 3]

        assert r_int2.min() == pytest.approx(R_MIN_INNER, abs=0.5)
        assert r_int2.max() == pytest.approx(R_MAX_CONTACT - THICKNESS, abs=0.5)
        assert r_contact.min() == pytest.approx(R_MIN_CONTACT, abs=0.5)
        assert r_contact.max() == pytest.approx(R_MAX_CONTACT, abs=0.5)
        assert r_ext1.max() == pytest.approx(R_MAX_OUTER, abs=0.5)
        assert r_ext1.min() >= R_MIN_CONTACT + THICKNESS

    def test_density_mean_approaches_the_range_midpoint(self):
        rng = np.random.default_rng(5)
        records = [sample_record(branch, rng) for branch in BRANCH_ORDER for _ in range(self.DRAWS // 3)]
        densities = np.array([(r.params.d1, r.params.d2) for r in records])

        assert densities.mean() == pytest.approx(sum(DENSITY_RANGE) / 2, abs=0.05)
