import json

import numpy as np
import pytest

from lphodge.grid import DataError, GridFunction, GridSpec
from lphodge.hodge import Form
from lphodge.io import (
    export_filter_bank, form_filename, read_filter_bank_multipliers, read_form, read_gfn, write_form, write_gfn,
)
from lphodge.littlewood_paley import build_filter_bank

from conftest import bandlimited


def test_gfn_round_trip_is_bit_identical(tmp_path):
    s = GridSpec(2, 16, period=3.5)
    f = bandlimited(s, 0, 1, 5, real=False)
    write_gfn(tmp_path / "f.gfn", f)
    g = read_gfn(tmp_path / "f.gfn")
    assert g.spec == s and np.array_equal(g.samples, f.samples)


def test_gfn_layout(tmp_path):
    s = GridSpec(1, 4)
    f = GridFunction(s, np.array([1, 2j, -3, 4 + 5j]))
    write_gfn(tmp_path / "f.gfn", f)
    raw = (tmp_path / "f.gfn").read_bytes()
    head, body = raw.split(b"\n", 1)
    h = json.loads(head)
    assert h == {"d": 1, "n": 4, "period": s.period, "dtype": "c128", "layout": "row-major"}
    assert np.array_equal(np.frombuffer(body, dtype="<c16"), f.samples)


def test_gfn_bad_header_and_size(tmp_path):
    p = tmp_path / "bad.gfn"
    p.write_bytes(b"not json\n" + bytes(16))
    with pytest.raises(DataError):
        read_gfn(p)
    s = GridSpec(1, 4)
    write_gfn(p, GridFunction.zeros(s))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(DataError):
        read_gfn(p)
    p.write_bytes(b'{"d": 1, "n": 4, "period": 1.0, "dtype": "f8", "layout": "row-major"}\n' + bytes(64))
    with pytest.raises(DataError):
        read_gfn(p)


def test_form_filenames():
    assert form_filename((0, 1)) == "I_0_1.gfn"
    assert form_filename(()) == "I_.gfn"


def test_form_directory_round_trip(tmp_path):
    s = GridSpec(3, 8)
    form = Form(s, 2, {I: bandlimited(s, i, 1, 3) for i, I in enumerate([(0, 1), (0, 2), (1, 2)])})
    write_form(tmp_path / "w", form)
    back = read_form(tmp_path / "w")
    assert back.l == 2 and back.spec == s
    for I in form.indices:
        assert np.array_equal(back[I].samples, form[I].samples)
    man = json.loads((tmp_path / "w" / "manifest.json").read_text())
    assert man["l"] == 2 and sorted(man["files"]) == ["I_0_1.gfn", "I_0_2.gfn", "I_1_2.gfn"]
    with pytest.raises(DataError):
        read_form(tmp_path / "missing")


def test_filter_bank_export(tmp_path):
    bank = build_filter_bank(GridSpec(2, 32))
    export_filter_bank(tmp_path / "fb", bank)
    mult = read_filter_bank_multipliers(tmp_path / "fb")
    assert sorted(mult) == list(bank.bands)
    for j in bank.bands:
        assert np.array_equal(mult[j], bank.multiplier(j))
    man = json.loads((tmp_path / "fb" / "manifest.json").read_text())
    assert "paper-footnote-v1" in json.dumps(man)
