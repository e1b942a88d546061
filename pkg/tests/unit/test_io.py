import os
import json
import pytest

import numpy as np

from piezobeam.errors import FileFormat
from piezobeam.utils.io import (
    IC_COLUMNS,
    format_value,
    atomic_write_text,
    write_csv,
    read_csv,
    to_json,
    write_json,
    read_initial_condition,
)


class TestFormatting:
    """Test cases for value formatting."""

    @pytest.mark.parametrize("value,text", [(None, 'NA'), (True, 'true'), (np.bool_(False), 'false'),
                                            (3, '3'), (np.int64(7), '7'), (0.1, '0.10000000000000001'),
                                            ('fem', 'fem')])
    def test_format_value(self, value, text):
        """None, booleans, integers, floats and strings."""
        assert format_value(value) == text

    def test_float_round_trip(self):
        """17 significant digits reproduce the float exactly."""
        value = 1.0 / 3.0
        assert float(format_value(value)) == value

    def test_json_non_finite(self):
        """Non-finite floats become strings and keys are sorted."""
        text = to_json({'b': np.inf, 'a': np.float64(1.5), 'c': [np.int32(2), np.bool_(True)]})
        assert text == '{"a": 1.5, "b": "inf", "c": [2, true]}'


class TestFiles:
    """Test cases for artifact files."""

    def test_csv_round_trip(self, tmp_path):
        """Headers and NA fields survive a write and read."""
        path = write_csv(str(tmp_path / 'sub' / 'rows.csv'), ('N', 'jstar'), [(40, None), (80, 5)])
        columns, rows = read_csv(path)
        assert columns == ['N', 'jstar']
        assert rows == [['40', 'NA'], ['80', '5']]

    def test_row_length_checked(self, tmp_path):
        """Rows must match the header."""
        with pytest.raises(ValueError):
            write_csv(str(tmp_path / 'rows.csv'), ('a', 'b'), [(1,)])

    def test_atomic_write_leaves_no_temporaries(self, tmp_path):
        """Only the destination remains after a write."""
        atomic_write_text(str(tmp_path / 'out.txt'), 'first')
        atomic_write_text(str(tmp_path / 'out.txt'), 'second')
        assert os.listdir(tmp_path) == ['out.txt']
        assert (tmp_path / 'out.txt').read_text() == 'second'

    def test_write_json(self, tmp_path):
        """JSON artifacts are indented and parse back."""
        path = write_json(str(tmp_path / 'data.json'), {'sigma_max': 102.0})
        with open(path) as f:
            assert json.load(f) == {'sigma_max': 102.0}

    def test_read_empty(self, tmp_path):
        """Empty and missing files raise FileFormat."""
        (tmp_path / 'empty.csv').write_text('')
        with pytest.raises(FileFormat):
            read_csv(str(tmp_path / 'empty.csv'))
        with pytest.raises(FileFormat):
            read_csv(str(tmp_path / 'missing.csv'))


class TestInitialConditionFile:
    """Test cases for custom initial condition files."""

    def _nodes(self, N):
        return np.arange(1, N + 2) / (N + 1)

    def test_without_clamped_row(self, tmp_path):
        """Files may omit the x = 0 row."""
        rows = [(x, x, 2 * x, 0.0, -x) for x in self._nodes(3)]
        path = write_csv(str(tmp_path / 'ic.csv'), IC_COLUMNS, rows)
        v0, p0, v1, p1 = read_initial_condition(path, 3, 1.0)
        assert np.allclose(p0, 2 * v0)
        assert np.allclose(p1, -v0)

    def test_wrong_columns(self, tmp_path):
        """Column names are checked."""
        path = write_csv(str(tmp_path / 'ic.csv'), ('x', 'v', 'p', 'vt', 'pt'), [(1.0, 0, 0, 0, 0)])
        with pytest.raises(FileFormat):
            read_initial_condition(path, 1, 1.0)

    def test_non_numeric(self, tmp_path):
        """Non-numeric entries are reported."""
        path = write_csv(str(tmp_path / 'ic.csv'), IC_COLUMNS, [(0.5, 'a', 0, 0, 0), (1.0, 0, 0, 0, 0)])
        with pytest.raises(FileFormat):
            read_initial_condition(path, 1, 1.0)

    def test_nonzero_clamped_row(self, tmp_path):
        """The clamped node must carry zeros."""
        rows = [(0.0, 1.0, 0.0, 0.0, 0.0)] + [(x, 0.0, 0.0, 0.0, 0.0) for x in self._nodes(1)]
        path = write_csv(str(tmp_path / 'ic.csv'), IC_COLUMNS, rows)
        with pytest.raises(FileFormat):
            read_initial_condition(path, 1, 1.0)

    def test_wrong_node_count(self, tmp_path):
        """The row count must match N+1."""
        rows = [(x, 0.0, 0.0, 0.0, 0.0) for x in self._nodes(4)]
        path = write_csv(str(tmp_path / 'ic.csv'), IC_COLUMNS, rows)
        with pytest.raises(FileFormat):
            read_initial_condition(path, 2, 1.0)
