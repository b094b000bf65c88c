import numpy as np
import pytest

from privf import io
from privf.config import RunConfig, load_config, parse_config
from privf.dist_core import Alphabet, ConditionalMapping, JointDistribution
from privf.exceptions import ConfigError, DataFormatError, UnknownLabelError


def test_symbol_codec():
    assert io.decode(io.encode(("a", "b"))) == ("a", "b")
    assert io.decode(io.encode("x")) == "x"
    assert io.fmt(0.1) == "0.1" and float(io.fmt(1 / 3)) == 1 / 3


def test_prior_roundtrip(tmp_path):
    p = JointDistribution(Alphabet(("x", "y")), Alphabet((("u", "1"), ("v", "2"))), [[0.1, 0.2], [0.3, 0.4]])
    io.write_prior(tmp_path / "p.csv", p)
    q = io.read_prior(tmp_path / "p.csv")
    assert q.same_alphabets(p)
    np.testing.assert_array_equal(q.mass, p.mass)


def test_mapping_roundtrip_omits_tiny(tmp_path):
    m = ConditionalMapping.from_array([[1 - 1e-14, 1e-14], [0.3, 0.7]], ins=("a", "b"), outs=("a", "b"))
    io.write_mapping(tmp_path / "m.csv", m)
    assert len((tmp_path / "m.csv").read_text().splitlines()) == 4
    back = io.read_mapping(tmp_path / "m.csv", out_alphabet=m.out_alphabet)
    np.testing.assert_allclose(back.rows, m.rows, atol=1e-13)
    np.testing.assert_allclose(back.rows.sum(axis=1), 1.0, atol=1e-12)


def test_bad_files(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("in_symbol,out_symbol\n")
    with pytest.raises(DataFormatError):
        io.read_mapping(f)
    f.write_text("private_symbol,public_symbol,probability\nx,u,abc\n")
    with pytest.raises(DataFormatError):
        io.read_prior(f)
    f.write_text("private_symbol,public_symbol,probability\nx,u,0.3\n")
    with pytest.raises(DataFormatError):
        io.read_prior(f)


def test_read_dataset_bins_and_values(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("inc,age,sex\nhi,25,m\nlo,45,f\nlo,70,f\n")
    t, orders = io.read_dataset(f, "inc", ["age", "sex"], bins={"age": [30, 60]}, values={"sex": ["m", "f"]})
    assert t.b[0] == ("(-inf,30)", "m") and t.b[2] == ("[60,inf)", "f")
    assert orders["sex"] == ("m", "f")
    with pytest.raises(UnknownLabelError):
        io.read_dataset(f, "inc", ["sex"], values={"sex": ["m"]})
    with pytest.raises(DataFormatError):
        io.read_dataset(f, "inc", ["sex"], bins={"sex": [1.0]})
    with pytest.raises(DataFormatError):
        io.read_dataset(f, "nope", ["sex"])


def test_config_parsing(tmp_path):
    cfg = parse_config("""
[data]
path = d.csv
private = a
public = x, y
bins.x = 1, 2
[solve]
deltas = 0, 0.5
k = 3
[run]
seed = 7
""", tmp_path)
    assert cfg.data_path == tmp_path / "d.csv"
    assert cfg.public == ("x", "y") and cfg.bins == {"x": (1.0, 2.0)}
    assert cfg.deltas == (0.0, 0.5) and cfg.k == 3 and cfg.seed == 7
    assert cfg.with_overrides(seed=9, out="o").seed == 9


@pytest.mark.parametrize("text", [
    "[solve]\nbogus = 1\n",
    "[nosuch]\n",
    "[solve]\ndeltas = 0.5, 0.1\n",
    "[solve]\nk = -1\n",
    "[distortion]\nmetric = cosine\n",
    "[solve]\nmax_iters = many\n",
])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.ini")
