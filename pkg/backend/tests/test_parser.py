import random

import pytest

from feeder.errors import (
    DuplicateId,
    FeederParseError,
    FeederSyntaxError,
    MatrixShapeMismatch,
    UnknownKey,
    UnknownKind,
    UnresolvedReference,
    ValidationFailed,
)
from feeder.model import (
    Bus,
    CapacitorBank,
    DGUnit,
    LineSegment,
    Load,
    Phase,
    PhasedNetwork,
    Regulator,
    Transformer,
)
from feeder.parser import build, parse, serialize
from tests.conftest import feeder_text, load_fixture, load_text


class TestParse:
    def test_fixture_declarations(self):
        doc = parse(feeder_text("four_bus"))
        kinds = [d.kind for d in doc.declarations]
        assert kinds.count("bus") == 4
        assert kinds.count("line") == 3
        assert kinds.count("load") == 3

    def test_continuation_lines_join_into_one_matrix(self, four_bus):
        l12 = four_bus.segment("l12")
        assert len(l12.z_matrix) == 3
        assert l12.z_matrix[0][0] == complex(0.7526, 1.1814)
        assert l12.z_matrix[2][1] == complex(0.1535, 0.3849)

    def test_keywords_are_normalized(self, four_bus):
        loads = {ld.id: ld for ld in four_bus.loads}
        assert loads["ld4z"].connection == "delta"
        assert loads["ld4z"].model == "constant_Z"
        assert loads["ld4i"].model == "constant_I"
        assert loads["ld4i"].phases == (Phase.B, Phase.C)

    def test_scalar_broadcast_over_phases(self):
        net = load_text(
            "bus s phases=abc kv_ln=2.4 source=yes\n"
            "bus n phases=abc kv_ln=2.4\n"
            "line l from=s to=n phases=abc z=[1+1j 0 0 | 0 1+1j 0 | 0 0 1+1j]\n"
            "load ld bus=n phases=abc kw=30 kvar=10\n"
        )
        assert net.loads[0].per_phase_kw == (30.0, 30.0, 30.0)
        assert net.loads[0].per_phase_kvar == (10.0, 10.0, 10.0)

    def test_defaults(self, two_bus):
        assert two_bus.name == "two_bus"
        assert two_bus.base_kva == 1000.0
        load = two_bus.loads[0]
        assert load.connection == "wye"
        assert load.model == "constant_PQ"

    def test_dg_capacity_defaults_to_lower_bound(self, two_dg):
        units = {g.id: g for g in two_dg.dg_units}
        assert units["dg1"].capacity_kw == 10.0
        assert units["dg2"].capacity_kw == 0.0

    def test_comments_and_blank_lines_are_ignored(self):
        doc = parse("# header\n\n   \nbus s phases=a kv_ln=1 source=yes  # trailing\n")
        assert len(doc.declarations) == 1
        assert doc.declarations[0].properties["source"] is True

    def test_crlf_line_endings(self):
        net = load_text(feeder_text("two_bus").replace("\n", "\r\n"))
        assert net.segment("l1").ampacity == 230.0


class TestParseErrors:
    def test_invalid_phase_set_position(self):
        with pytest.raises(FeederSyntaxError) as info:
            parse(feeder_text("malformed"))
        assert (info.value.line, info.value.column) == (2, 15)
        assert str(info.value) == "2:15 invalid phase set (near 'abx')"

    def test_describe_prefixes_file_name(self):
        with pytest.raises(FeederParseError) as info:
            parse(feeder_text("malformed"))
        assert info.value.describe("x.feeder") == "x.feeder:2:15 invalid phase set (near 'abx')"

    def test_unknown_kind(self):
        with pytest.raises(UnknownKind) as info:
            parse("bus s phases=a kv_ln=1 source=yes\nswitch k1 from=s\n")
        assert (info.value.line, info.value.column) == (2, 1)

    def test_unknown_key(self):
        with pytest.raises(UnknownKey) as info:
            parse("bus s phases=a kv_ln=1 colour=red\n")
        assert info.value.column == 24

    def test_duplicate_id_points_at_second(self):
        with pytest.raises(DuplicateId) as info:
            parse("bus s phases=a kv_ln=1\nbus s phases=a kv_ln=1\n")
        assert (info.value.line, info.value.column) == (2, 5)
        assert "line 1" in info.value.message

    def test_same_id_in_different_kinds_is_allowed(self):
        doc = parse("bus x phases=a kv_ln=1 source=yes\nload x bus=x phases=a kw=1\n")
        assert len(doc.declarations) == 2

    def test_matrix_shape_mismatch(self):
        with pytest.raises(MatrixShapeMismatch):
            parse("line l from=a to=b phases=ab z=[1 0 0 | 0 1 0 | 0 0 1]\n")

    def test_ragged_matrix(self):
        with pytest.raises(MatrixShapeMismatch):
            parse("line l from=a to=b phases=ab z=[1 0 | 0]\n")

    def test_per_phase_count_mismatch(self):
        with pytest.raises(MatrixShapeMismatch):
            parse("load ld bus=b phases=abc kw=[1 2]\n")

    def test_missing_required_key(self):
        with pytest.raises(FeederSyntaxError, match="missing required key 'kv_ln'"):
            parse("bus s phases=a\n")

    def test_bad_number_column_in_continued_line(self):
        text = "line l from=a to=b phases=a \\\n  z=[1+1x]\n"
        with pytest.raises(FeederSyntaxError) as info:
            parse(text)
        assert info.value.line == 2
        assert info.value.column == 6

    def test_columns_count_bytes(self):
        with pytest.raises(FeederSyntaxError) as info:
            parse("bus sé phases=q kv_ln=1\n")
        # the accented id takes two bytes
        assert info.value.column == 16

    def test_unclosed_bracket(self):
        with pytest.raises(FeederSyntaxError, match="unclosed"):
            parse("load ld bus=b phases=a kw=[1\n")

    def test_non_finite_number(self):
        with pytest.raises(FeederSyntaxError, match="out of range"):
            parse("bus s phases=a kv_ln=1e400\n")


class TestBuild:
    def test_unresolved_bus(self):
        with pytest.raises(UnresolvedReference) as info:
            load_text("bus s phases=a kv_ln=1 source=yes\nload ld bus=nowhere phases=a kw=1\n")
        assert info.value.name == "nowhere"
        assert info.value.referenced_by == "ld"

    def test_unresolved_segment(self):
        text = feeder_text("two_bus") + "regulator r1 segment=l9 phases=a taps=1.0\n"
        with pytest.raises(UnresolvedReference) as info:
            load_text(text)
        assert info.value.referenced_by == "r1"

    def test_forward_references_resolve(self, two_dg):
        assert two_dg.has_bus("n6")
        assert two_dg.bus("n6").phases == (Phase.A, Phase.B)

    def test_validation_report(self):
        with pytest.raises(ValidationFailed) as info:
            load_fixture("cyclic")
        assert [(v.element_id, v.reason) for v in info.value.report] == [("l3", "not radial")]


def _random_network(rng: random.Random) -> PhasedNetwork:
    phase_choices = ["a", "b", "c", "ab", "bc", "ac", "abc"]
    n_buses = rng.randint(2, 8)
    buses = [Bus("b0", (Phase.A, Phase.B, Phase.C), rng.choice([2.4, 7.2, 0.48]), True)]
    segments, transformers, loads, capacitors, regulators, dg_units = [], [], [], [], [], []

    def value():
        return round(rng.uniform(0.0, 500.0), rng.randint(0, 6))

    for k in range(1, n_buses):
        parent = buses[rng.randrange(len(buses))]
        parent_text = "".join(p.value for p in parent.phases)
        phases = tuple(p for p in parent.phases if p.value in rng.choice([parent_text] + phase_choices))
        if not phases:
            phases = parent.phases
        n = len(phases)
        if rng.random() < 0.2:
            bus = Bus(f"b{k}", phases, rng.choice([0.24, 2.4]))
            transformers.append(Transformer(
                f"t{k}", parent.id, bus.id, phases, rng.uniform(10, 5000),
                complex(rng.uniform(0, 0.02), rng.uniform(0.01, 0.1)), rng.choice([1.0, 1.025]),
            ))
        else:
            bus = Bus(f"b{k}", phases, parent.kv_ln)
            z = [[complex(0, 0)] * n for _ in range(n)]
            for i in range(n):
                for j in range(i, n):
                    z[i][j] = z[j][i] = complex(rng.uniform(0, 1), rng.uniform(0, 1))
            segments.append(LineSegment(
                f"s{k}", parent.id, bus.id, phases, tuple(map(tuple, z)),
                rng.choice([None, 400.0, 123.456]), rng.choice([None, 1609.344]),
            ))
            if rng.random() < 0.3:
                regulators.append(Regulator(
                    f"r{k}", f"s{k}", phases, tuple(rng.uniform(0.9, 1.1) for _ in phases)
                ))
        buses.append(bus)
        if rng.random() < 0.7:
            delta = n >= 2 and rng.random() < 0.3
            loads.append(Load(
                f"ld{k}", bus.id, phases, "delta" if delta else "wye",
                rng.choice(["constant_PQ", "constant_Z", "constant_I"]),
                tuple(value() for _ in phases), tuple(rng.uniform(-100, 100) for _ in phases),
            ))
        if rng.random() < 0.2:
            capacitors.append(CapacitorBank(
                f"c{k}", bus.id, phases, tuple(value() for _ in phases), rng.random() < 0.8
            ))
        if rng.random() < 0.3:
            hi = value()
            lo = rng.uniform(0, hi)
            dg_units.append(DGUnit(f"g{k}", bus.id, phases, lo, hi, rng.uniform(lo, hi)))

    def by_id(items):
        return tuple(sorted(items, key=lambda item: item.id))

    return PhasedNetwork(
        name=f"net{rng.randrange(1000)}",
        buses=by_id(buses), segments=by_id(segments), transformers=by_id(transformers),
        loads=by_id(loads), capacitors=by_id(capacitors), regulators=by_id(regulators),
        dg_units=by_id(dg_units), v_min_pu=0.95, v_max_pu=1.05, base_kva=rng.uniform(100, 1e5),
    )


class TestSerialize:
    def test_random_networks_survive_serialization(self):
        rng = random.Random(20240601)
        for _ in range(1000):
            net = _random_network(rng)
            assert build(parse(serialize(net))) == net

    def test_canonical_text_is_stable(self, four_bus):
        text = serialize(four_bus)
        assert serialize(build(parse(text))) == text
        assert text.splitlines()[0].startswith("network four_bus ")

    def test_sections_grouped_and_sorted(self, two_dg):
        kinds = [line.split()[0] for line in serialize(two_dg).splitlines()]
        assert kinds == sorted(kinds, key=["network", "bus", "line", "transformer", "regulator",
                                           "load", "capacitor", "dg"].index)


@pytest.mark.parametrize("seed", [7, 11, 23, 42])
def test_garbage_never_escapes_as_other_exceptions(seed):
    rng = random.Random(seed)
    alphabet = "busline dg=[]|#\\\n0123456789.+-jabcxyz_ \t"
    base = feeder_text("four_bus")
    for _ in range(500):
        chars = list(base)
        for _ in range(rng.randint(1, 6)):
            at = rng.randrange(len(chars))
            if rng.random() < 0.2:
                del chars[at]
            else:
                chars[at] = rng.choice(alphabet)
        try:
            build(parse("".join(chars)))
        except (FeederParseError, UnresolvedReference, ValidationFailed):
            pass
