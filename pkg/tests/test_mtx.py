import io

import numpy as np
import pytest
import scipy.io
import scipy.sparse
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rpmsolve.errors import MatrixMarketError
from rpmsolve.mtx import (format_matrix_market, load_matrix_market,
                          read_matrix_market, write_matrix_market)


def scipy_read(text):
    M = scipy.io.mmread(io.BytesIO(text.encode()))
    return M.toarray() if scipy.sparse.issparse(M) else np.asarray(M, dtype=float)


CASES = {
    "coordinate_general": """%%MatrixMarket matrix coordinate real general
% a comment
3 4 4
1 1 2.5
2 3 -1
3 4 1e-3
3 1 7
""",
    "coordinate_symmetric": """%%MatrixMarket matrix coordinate real symmetric
3 3 4
1 1 1.0
2 1 2.0
3 2 -3.0
3 3 4.0
""",
    "coordinate_skew": """%%MatrixMarket matrix coordinate real skew-symmetric
3 3 2
2 1 2.0
3 1 -5.0
""",
    "coordinate_integer": """%%MatrixMarket matrix coordinate integer general
2 2 2
1 2 3
2 1 -4
""",
    "coordinate_pattern": """%%MatrixMarket matrix coordinate pattern general
2 3 3
1 1
2 2
2 3
""",
    "array_general": """%%MatrixMarket matrix array real general
2 3
1
2
3
4
5
6
""",
    "array_symmetric": """%%MatrixMarket matrix array real symmetric
3 3
1
2
3
4
5
6
""",
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_reader_agrees_with_scipy(name):
    text = CASES[name]
    assert np.array_equal(read_matrix_market(text), scipy_read(text))


@pytest.mark.parametrize("text, line", [
    ("", 1),
    ("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n", 1),
    ("%%MatrixMarket matrix coordinate real hermitian\n1 1 0\n", 1),
    ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
    ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", 3),
    ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n", 3),
    ("%%MatrixMarket matrix coordinate real general\n2 2\n", 2),
    ("%%MatrixMarket matrix array real general\n1 1\n1\n2\n", 4),
])
def test_malformed_input_reports_line(text, line):
    with pytest.raises(MatrixMarketError) as info:
        read_matrix_market(text)
    assert info.value.line == line


def test_file_round_trip(tmp_path):
    A = np.array([[0.0, 1.5], [-2.25, 0.0], [1e-300, 3.0]])
    path = tmp_path / "a.mtx"
    write_matrix_market(path, A)
    assert np.array_equal(load_matrix_market(path), A)
    assert np.array_equal(scipy.io.mmread(str(path)).toarray(), A)
    assert [p.name for p in tmp_path.iterdir()] == ["a.mtx"]


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.one_of(st.just(0.0),
                                 st.floats(-1e300, 1e300, allow_nan=False,
                                           allow_infinity=False))),
       st.sampled_from(["coordinate", "array"]))
def test_round_trip_is_exact(A, fmt):
    A = A + 0.0  # normalise -0.0, which the coordinate format drops
    assert np.array_equal(read_matrix_market(format_matrix_market(A, fmt)), A)
