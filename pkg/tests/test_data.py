import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivdml import ColumnRoles, Sample, load_csv, make_folds
from ivdml.data import (
    MissingColumnError,
    RoleConflictError,
    TooFewRowsError,
    UnparsableNumericError,
    write_csv,
)


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadCsv:
    def test_three_row_file(self, tmp_path):
        path = _write(tmp_path, "a,b,c,e\n1,2,3,4\n5,6,7,8\n9,10,11,12\n")
        roles = ColumnRoles(y=0, d=1, z=(2,), x=(3,), v=3)
        s = load_csv(path, roles)
        assert s.n == 3
        assert s.v_col == 0
        np.testing.assert_array_equal(s.y, [1, 5, 9])
        np.testing.assert_array_equal(s.d, [2, 6, 10])
        np.testing.assert_array_equal(s.z[:, 0], [3, 7, 11])
        np.testing.assert_array_equal(s.v, [4, 8, 12])

    def test_na_cell_reports_position(self, tmp_path):
        path = _write(tmp_path, "a,b,c,e\n1,2,3,4\n5,NA,7,8\n9,10,11,12\n")
        roles = ColumnRoles(y=0, d=1, z=(2,), x=(3,), v=3)
        with pytest.raises(UnparsableNumericError, match="unparsable numeric at row 2, column 1"):
            load_csv(path, roles)

    def test_v_outside_x_is_appended(self, tmp_path):
        path = _write(tmp_path, "a,b,c,e,f\n1,2,3,4,0.5\n5,6,7,8,0.6\n9,10,11,12,0.7\n")
        roles = ColumnRoles(y=0, d=1, z=(2,), x=(3,), v=4)
        s = load_csv(path, roles)
        assert s.x.shape == (3, 2)
        assert s.v_col == 1
        np.testing.assert_array_equal(s.v, [0.5, 0.6, 0.7])

    def test_missing_column(self, tmp_path):
        path = _write(tmp_path, "a,b\n1,2\n3,4\n")
        with pytest.raises(MissingColumnError, match="column 2"):
            load_csv(path, ColumnRoles(y=0, d=1, z=(2,), x=(3,), v=3))

    def test_role_conflict(self):
        with pytest.raises(RoleConflictError):
            ColumnRoles(y=0, d=0, z=(1,), x=(2,), v=2)
        with pytest.raises(RoleConflictError):
            ColumnRoles(y=0, d=1, z=(2,), x=(2, 3), v=3)
        with pytest.raises(RoleConflictError):
            ColumnRoles(y=0, d=1, z=(2,), x=(3,), v=2)

    def test_too_few_rows(self, tmp_path):
        path = _write(tmp_path, "a,b,c,e\n1,2,3,4\n")
        with pytest.raises(TooFewRowsError):
            load_csv(path, ColumnRoles(y=0, d=1, z=(2,), x=(3,), v=3))

    def test_infinite_cell_rejected(self, tmp_path):
        path = _write(tmp_path, "a,b,c,e\n1,2,3,4\ninf,6,7,8\n")
        with pytest.raises(UnparsableNumericError):
            load_csv(path, ColumnRoles(y=0, d=1, z=(2,), x=(3,), v=3))

    @given(
        st.lists(
            st.tuples(*[st.floats(-1e300, 1e300, allow_nan=False) for _ in range(4)]),
            min_size=2,
            max_size=12,
        )
    )
    def test_round_trip_bit_exact(self, rows):
        import tempfile, os

        mat = np.asarray(rows, dtype=float)
        s = Sample(y=mat[:, 0], d=mat[:, 1], z=mat[:, 2:3], x=mat[:, 3:4], v_col=0)
        fd, path = tempfile.mkstemp(suffix=".csv")
        os.close(fd)
        try:
            write_csv(path, s)
            s2 = load_csv(path, ColumnRoles(y=0, d=1, z=(2,), x=(3,), v=3))
            for a, b in ((s.y, s2.y), (s.d, s2.d), (s.z, s2.z), (s.x, s2.x)):
                assert a.tobytes() == b.tobytes()
        finally:
            os.unlink(path)


class TestSample:
    def test_immutability(self):
        s = Sample(y=[1.0, 2.0], d=[0.0, 1.0], z=[[1.0], [2.0]], x=[[3.0], [4.0]], v_col=0)
        with pytest.raises(ValueError):
            s.y[0] = 5.0

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            Sample(y=[1.0, np.nan], d=[0.0, 1.0], z=[[1.0], [2.0]], x=[[3.0], [4.0]], v_col=0)

    def test_v_col_range(self):
        with pytest.raises(ValueError, match="v_col"):
            Sample(y=[1.0, 2.0], d=[0.0, 1.0], z=[[1.0], [2.0]], x=[[3.0], [4.0]], v_col=2)


class TestMakeFolds:
    def test_equal_sizes(self):
        part = make_folds(10, 5, seed=42)
        assert sorted(len(f) for f in part.folds) == [2, 2, 2, 2, 2]

    def test_near_equal_sizes(self):
        part = make_folds(10, 3, seed=42)
        assert sorted(len(f) for f in part.folds) == [3, 3, 4]

    def test_deterministic(self):
        a = make_folds(10, 5, seed=7)
        b = make_folds(10, 5, seed=7)
        for fa, fb in zip(a.folds, b.folds):
            np.testing.assert_array_equal(fa, fb)

    def test_seed_changes_partition(self):
        a = make_folds(50, 5, seed=1)
        b = make_folds(50, 5, seed=2)
        assert any(not np.array_equal(fa, fb) for fa, fb in zip(a.folds, b.folds))

    @pytest.mark.parametrize("n,k", [(5, 1), (5, 6), (3, 0)])
    def test_invalid_k(self, n, k):
        with pytest.raises(ValueError):
            make_folds(n, k, seed=0)

    @given(st.integers(2, 60), st.integers(2, 10), st.integers(0, 2**63))
    def test_partition_invariants(self, n, k, seed):
        if k > n:
            k = n
        part = make_folds(n, k, seed)
        allidx = np.sort(np.concatenate(part.folds))
        np.testing.assert_array_equal(allidx, np.arange(n))
        sizes = [len(f) for f in part.folds]
        assert max(sizes) - min(sizes) <= 1
        for j, f in enumerate(part.folds):
            assert np.all(part.fold_of[f] == j)

    def test_complement(self):
        part = make_folds(9, 3, seed=3)
        for j in range(3):
            comp = part.complement(j)
            assert len(comp) == 9 - len(part.folds[j])
            assert not np.intersect1d(comp, part.folds[j]).size
