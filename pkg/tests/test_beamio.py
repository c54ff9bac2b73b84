import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isac_twin.beamio import (
    BeamBlock,
    dataset_dims,
    load_external_beams,
    read_beams,
    read_dataset,
    write_beams,
    write_dataset,
)
from isac_twin.errors import FormatError


def unit_rows(rng, K, n_t):
    b = rng.normal(size=(K, n_t)) + 1j * rng.normal(size=(K, n_t))
    return b / np.linalg.norm(b, axis=1, keepdims=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 6), st.integers(1, 16), st.integers(1, 4))
def test_beam_roundtrip_bit_exact(tmp_path_factory, seed, K, n_t, nblocks):
    rng = np.random.default_rng(seed)
    blocks = [BeamBlock(s, rng.integers(0, 2, K), unit_rows(rng, K, n_t) * rng.uniform(0.1, 1.0)) for s in range(1, nblocks + 1)]
    p = tmp_path_factory.mktemp("b") / "beams.txt"
    write_beams(p, blocks)
    back = read_beams(p)
    assert len(back) == nblocks
    for a, b in zip(blocks, back):
        assert a.slot == b.slot
        np.testing.assert_array_equal(a.rsu, b.rsu)
        np.testing.assert_array_equal(a.beams, b.beams)


def test_overnorm_column_is_rescaled(tmp_path):
    b = np.zeros((2, 4), complex)
    b[0, 0] = 1.2
    b[1] = 0.5
    p = tmp_path / "b.txt"
    write_beams(p, [BeamBlock(3, np.array([0, 1]), b)])
    with pytest.warns(UserWarning, match="exceed unit norm"):
        blk = read_beams(p)[0]
    assert np.linalg.norm(blk.beams[0]) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(blk.beams[1], b[1])


def test_norm_within_slack_untouched(tmp_path):
    b = np.full((1, 4), 0.5 * (1 + 5e-7), complex)
    p = tmp_path / "b.txt"
    write_beams(p, [BeamBlock(1, np.array([1]), b)])
    np.testing.assert_array_equal(read_beams(p)[0].beams, b)


def write_text(tmp_path, text):
    p = tmp_path / "b.txt"
    p.write_text(text)
    return p


def test_record_count_short(tmp_path):
    p = write_text(tmp_path, "2 2 1\n1 0 1.0 0.0 0.0 0.0\n")
    with pytest.raises(FormatError, match="only 1 records"):
        read_beams(p)


def test_record_count_long(tmp_path):
    p = write_text(tmp_path, "2 1 1\n1 0 1.0 0.0 0.0 0.0\n2 1 1.0 0.0 0.0 0.0\n")
    with pytest.raises(FormatError, match="more records") as e:
        read_beams(p)
    assert e.value.line == 3


def test_short_block_followed_by_header(tmp_path):
    p = write_text(tmp_path, "2 2 1\n1 0 1.0 0.0 0.0 0.0\n2 1 2\n1 0 1.0 0.0 0.0 0.0\n")
    with pytest.raises(FormatError, match="only 1 records"):
        read_beams(p)


@pytest.mark.parametrize(
    "text, field",
    [
        ("2 1 1\n3 0 1.0 0.0 0.0 0.0\n", "i"),
        ("2 1 1\n1 1 1.0 0.0 0.0 0.0\n", "k"),
        ("2 1 1\n1 0 1.0 0.0 0.0\n", "record"),
        ("2 1 1\n1 0 1.0 nan 0.0 0.0\n", "record"),
        ("2 1 1\n1 0 1.0 x 0.0 0.0\n", "col1"),
        ("2 x 1\n", "K"),
        ("2 1\n", "header"),
    ],
)
def test_format_errors_name_line_and_field(tmp_path, text, field):
    p = write_text(tmp_path, text)
    with pytest.raises(FormatError) as e:
        read_beams(p)
    assert e.value.field == field
    assert e.value.line is not None


def test_comments_blank_lines_and_empty_block(tmp_path):
    p = write_text(tmp_path, "# predictor output\n\n2 0 5\n\n2 1 6\n2 0 0.5 0.5 0.5 -0.5\n")
    blocks = read_beams(p)
    assert [b.slot for b in blocks] == [5, 6]
    assert blocks[0].K == 0
    xi, F = blocks[1].as_assignment()
    np.testing.assert_array_equal(xi, [[0, 1]])
    np.testing.assert_array_equal(F[1, :, 0], [0.5 + 0.5j, 0.5 - 0.5j])
    assert np.all(F[0] == 0)


def test_duplicate_slot_rejected(tmp_path):
    p = write_text(tmp_path, "2 0 5\n2 0 5\n")
    with pytest.raises(FormatError, match="duplicate"):
        load_external_beams(p)


def test_dataset_dims():
    assert dataset_dims(32, 32) == (130, 65)
    assert dataset_dims(4, 2) == (14, 9)


def test_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    nf, nl = dataset_dims(4, 3)
    recs = [(s, k, rng.normal(size=nf), np.append(rng.normal(size=nl - 1), 1 + k % 2)) for s in range(1, 4) for k in range(2)]
    p = tmp_path / "d.txt"
    assert write_dataset(p, 4, 3, recs) == 6
    meta, slots, ks, X, Y = read_dataset(p)
    assert meta == {"n_t": 4, "n_r": 3, "features": nf, "labels": nl}
    np.testing.assert_array_equal(slots, [r[0] for r in recs])
    np.testing.assert_array_equal(ks, [r[1] for r in recs])
    np.testing.assert_array_equal(X, np.array([r[2] for r in recs]))
    np.testing.assert_array_equal(Y, np.array([r[3] for r in recs]))


def test_dataset_wrong_width(tmp_path):
    with pytest.raises(FormatError):
        write_dataset(tmp_path / "d.txt", 4, 3, [(1, 0, np.zeros(3), np.zeros(9))])
    p = tmp_path / "e.txt"
    p.write_text("dataset n_t=1 n_r=1 features=6 labels=3\n1 0 1 2 3\n")
    with pytest.raises(FormatError) as e:
        read_dataset(p)
    assert e.value.line == 2


def test_dataset_bad_header(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("dataset n_t=1 n_r=1 features=5 labels=3\n")
    with pytest.raises(FormatError, match="inconsistent"):
        read_dataset(p)
