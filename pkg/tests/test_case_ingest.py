import io

import numpy as np
import pytest

from dcattack.case_ingest import (
    build_case, case_from_json, case_to_json, load_case, parse_case,
    parse_case_text,
)
from dcattack.errors import CaseError

TWO_BUS = """\
function mpc = desk2
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t2\t1\t50\t10\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t30\t-30\t1\t100\t1\t200\t0;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t100\t0\t0\t0\t0\t1\t-30\t30;
];
mpc.gencost = [
\t2\t0\t0\t3\t0\t12\t0;
];
"""


def test_parse_two_bus_units():
    case = parse_case_text(TWO_BUS, name="desk2")
    assert case.base_mva == 100.0
    assert [b.p_d for b in case.buses] == [0.0, 0.5]
    br = case.branches[0]
    assert br.b == pytest.approx(10.0)
    assert br.rate == pytest.approx(1.0)
    g = case.generators[0]
    assert (g.p_min, g.p_max) == (0.0, 2.0)
    assert g.cost == 12.0


def test_parse_case_accepts_stream():
    case = parse_case(io.StringIO(TWO_BUS), name="desk2")
    assert case.name == "desk2"
    assert case == parse_case(TWO_BUS, name="desk2")


def test_parse_drops_out_of_service():
    text = TWO_BUS.replace(
        "mpc.gen = [\n\t1\t0\t0\t30\t-30\t1\t100\t1\t200\t0;",
        "mpc.gen = [\n\t1\t0\t0\t30\t-30\t1\t100\t1\t200\t0;\n"
        "\t2\t0\t0\t30\t-30\t1\t100\t0\t500\t0;")
    case = parse_case_text(text)
    assert case.n_gen == 1

    text = TWO_BUS.replace(
        "\t1\t2\t0\t0.1\t0\t100\t0\t0\t0\t0\t1\t-30\t30;",
        "\t1\t2\t0\t0.1\t0\t100\t0\t0\t0\t0\t1\t-30\t30;\n"
        "\t1\t2\t0\t0.4\t0\t100\t0\t0\t0\t0\t0\t-30\t30;")
    case = parse_case_text(text)
    assert case.n_branch == 1


def test_rate_zero_is_unbounded():
    text = TWO_BUS.replace("\t1\t2\t0\t0.1\t0\t100", "\t1\t2\t0\t0.1\t0\t0")
    case = parse_case_text(text)
    assert case.branches[0].rate is None


def test_missing_table_and_basemva():
    with pytest.raises(CaseError, match="missing mpc.gen"):
        parse_case_text(TWO_BUS.replace("mpc.gen", "mpc.notgen"))
    with pytest.raises(CaseError, match="baseMVA"):
        parse_case_text(TWO_BUS.replace("mpc.baseMVA = 100;", ""))


def test_duplicate_bus_rejected():
    text = TWO_BUS.replace(
        "\t2\t1\t50\t10\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;",
        "\t2\t1\t50\t10\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;\n"
        "\t2\t1\t10\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;")
    with pytest.raises(CaseError, match="duplicate"):
        parse_case_text(text)


def test_unknown_bus_reference():
    text = TWO_BUS.replace("mpc.gen = [\n\t1", "mpc.gen = [\n\t9")
    with pytest.raises(CaseError, match="unknown bus"):
        parse_case_text(text)


def test_disconnected_rejected():
    with pytest.raises(CaseError, match="disconnected"):
        build_case("bad", 100.0, buses=[(1, 0.0), (2, 1.0), (3, 0.0)],
                   branches=[(1, 2, 0.1, None)],
                   generators=[(1, 0.0, 2.0)])


def test_zero_reactance_rejected():
    with pytest.raises(CaseError, match="zero reactance"):
        parse_case_text(TWO_BUS.replace("\t1\t2\t0\t0.1", "\t1\t2\t0\t0"))


def test_bad_number_reports_line():
    with pytest.raises(CaseError, match="line 7"):
        parse_case_text(TWO_BUS.replace("\t2\t1\t50", "\t2\tx\t50"))


def test_gen_bounds_sanity():
    with pytest.raises(CaseError, match="p_min"):
        build_case("bad", 100.0, buses=[(1, 1.0)], branches=[],
                   generators=[(1, 3.0, 2.0)])


def test_json_round_trip(desk3):
    text = case_to_json(desk3)
    back = case_from_json(text)
    assert back == desk3
    # a second trip is byte-identical (canonical form)
    assert case_to_json(back) == text


def test_json_round_trip_from_matpower():
    case = parse_case_text(TWO_BUS, name="desk2")
    assert case_from_json(case_to_json(case)) == case


def test_load_case_json(tmp_path, desk2):
    p = tmp_path / "desk2.json"
    p.write_text(case_to_json(desk2))
    assert load_case(p) == desk2


def test_load_case_matpower(tmp_path):
    p = tmp_path / "two.m"
    p.write_text(TWO_BUS)
    case = load_case(p)
    assert case.name == "two"
    assert case.n_bus == 2


def test_helper_arrays(desk3):
    assert desk3.total_load() == pytest.approx(2.5)
    np.testing.assert_array_equal(desk3.load_positions(), [1, 2])
    np.testing.assert_array_equal(desk3.gen_positions(), [0, 2])
    lo, hi = desk3.gen_bounds()
    np.testing.assert_allclose(hi, [3.0, 1.0])
