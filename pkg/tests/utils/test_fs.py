import pytest

from canm.utils import atomic_write_bytes, atomic_write_text, staged_directory


def test_atomic_write_creates_parents(tmp_path):
    target = tmp_path / "a" / "b.txt"
    atomic_write_text(target, "hello")
    assert target.read_text() == "hello"
    atomic_write_bytes(target, b"again")
    assert target.read_bytes() == b"again"
    assert [p.name for p in target.parent.iterdir()] == ["b.txt"]


def test_staged_directory_moves_files_on_success(tmp_path):
    target = tmp_path / "out"
    with staged_directory(target) as staging:
        (staging / "x.txt").write_text("1")
        assert not (target / "x.txt").exists()
    assert (target / "x.txt").read_text() == "1"
    assert [p.name for p in tmp_path.iterdir()] == ["out"]


def test_staged_directory_discards_on_failure(tmp_path):
    target = tmp_path / "out"
    with pytest.raises(RuntimeError):
        with staged_directory(target) as staging:
            (staging / "x.txt").write_text("1")
            raise RuntimeError("boom")
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []
