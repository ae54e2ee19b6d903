"""Frontend: golden parse of the pendulum listing, malformed-input spans,
round-trip stability, lowering, and the JSON schema."""

import pytest

from hyflow import dsl as D
from hyflow import expr as ex
from hyflow.affine import Rel
from hyflow.errors import ModelError, ParseError, SchemaError
from hyflow.interval import Interval
from hyflow.jsonmodel import parse_json_automaton

PENDULUM = """\
set duration = 3.8;
set dt = 0.05;
set max_dt = 0.1;
set scope_xy = true;

init theta = [1.,1.05];
init dtheta = 0.;
init t = 0;

l = 1.2;
g = 9.81;
theta' = dtheta;
dtheta' = -g/l*sin(theta);
t' = 1;

on sin(theta) <= -0.5 do { print("Bouncing!\\n"); dtheta = -dtheta };

output(t,theta);
"""


def test_pendulum_golden_parse():
    m = D.parse_dsl(PENDULUM)
    assert m.settings == {"duration": 3.8, "dt": 0.05, "max_dt": 0.1,
                          "scope_xy": True}
    assert set(m.inits) == {"theta", "dtheta", "t"}
    assert m.inits["theta"] == Interval(1.0, 1.05)
    assert m.inits["dtheta"] == Interval(0.0, 0.0)
    assert set(m.constants) == {"l", "g"}
    assert set(m.flows) == {"theta", "dtheta", "t"}
    assert len(m.events) == 1
    evt = m.events[0]
    assert evt.prints == ("Bouncing!\n",)
    assert evt.assigns[0][0] == "dtheta"
    assert m.outputs == ("t", "theta")
    assert isinstance(evt.guard, ex.Comparison)
    assert evt.guard.rel is Rel.LE


def test_pendulum_lowering():
    ha, settings = D.lower_to_automaton(D.parse_dsl(PENDULUM))
    assert ha.variables == ("theta", "dtheta", "t")
    assert list(ha.flows) == ["main"]
    assert len(ha.edges) == 1
    # constants are inlined: -9.81/1.2 appears in the flow of dtheta
    flow_txt = ex.to_text(ha.flows["main"]["dtheta"])
    assert "g" not in flow_txt and "l" not in flow_txt
    assert settings["duration"] == 3.8
    assert settings["plot"] == ("t", "theta")
    # strictness transform then makes the guard strict but unpinnable
    prepared, warnings = ex.prepare_automaton(ha)
    assert prepared.edges[0].guard.rel is Rel.LT
    assert prepared.edges[0].boundary_reset


def test_brusselator_init_interval():
    m = D.parse_dsl("set duration=1;\ninit x = [0.9,1];\nx' = -x;\n")
    assert m.inits["x"] == Interval(0.9, 1.0)


MALFORMED = [
    "set duration = 1;\ntheta' = dtheta\n",           # missing semicolon
    "set duration = ;\n",                              # missing value
    "set bogus = 1;\n",                                # unknown setting
    "set duration = 1;\nset duration = 2;\n",          # duplicate setting
    "init x = [2, 1];\n",                              # inverted interval
    "init x = [1, ;\n",                                # broken interval
    "x'' = 1;\n",                                      # double prime
    "x' 1;\n",                                         # missing =
    "on x do { y = 1 };\n",                            # guard lacks relation
    "on x < do { y = 1 };\n",                          # relation lacks rhs
    "on x == 0 do { y = 1 };\n",                       # equality guard
    "on x < 0 do y = 1;\n",                            # missing braces
    "on x < 0 do { y = 1 }\n",                         # missing final ;
    "on x < 0 do { print(nope) };\n",                  # print needs a string
    "output(x);\n",                                     # output needs two names
    "output(x, );\n",                                   # trailing comma
    "init x = 1e;\n",                                   # broken number
    'on x < 0 do { print("unterminated) };\n',          # unterminated string
    "x' = 2 ** 3;\n",                                   # ** is not an operator
    "x' = sin();\n",                                    # empty call
    "init x = 1; init x = 2;\n",                        # duplicate init
    "x' = (1 + 2;\n",                                   # unbalanced paren
    "x' = 1 $ 2;\n",                                    # stray character
]


@pytest.mark.parametrize("src", MALFORMED)
def test_malformed_inputs_have_spans(src):
    with pytest.raises(ParseError) as info:
        D.parse_dsl(src)
    assert info.value.span is not None
    lines = src.splitlines()
    assert 1 <= info.value.span.line <= len(lines) + 1


def test_round_trip_structural_identity():
    m1 = D.parse_dsl(PENDULUM)
    printed = D.pretty_print(m1)
    m2 = D.parse_dsl(printed)
    assert m2.settings == m1.settings
    assert m2.inits == m1.inits
    assert m2.constants == m1.constants  # interned nodes compare by identity
    assert m2.flows == m1.flows
    assert m2.outputs == m1.outputs
    assert len(m2.events) == len(m1.events)
    assert m2.events[0].guard == m1.events[0].guard
    assert m2.events[0].assigns == m1.events[0].assigns
    assert m2.events[0].prints == m1.events[0].prints
    # printing is a fixpoint after one round
    assert D.pretty_print(m2) == printed


def test_implicit_clock_added():
    m = D.parse_dsl("set duration=1;\ninit x = 0;\nx' = sin(10*t);\n")
    ha, _ = D.lower_to_automaton(m)
    assert "t" in ha.variables
    assert ha.flows["main"]["t"] is ex.ONE
    assert ha.initial_box["t"] == Interval(0, 0)


def test_lowering_errors():
    with pytest.raises(ModelError):  # var with neither flow nor constant
        D.lower_to_automaton(D.parse_dsl("set duration=1;\ninit x=0;\nx' = q;\n"))
    with pytest.raises(ModelError):  # missing init
        D.lower_to_automaton(D.parse_dsl("set duration=1;\nx' = -x;\n"))
    with pytest.raises(ModelError):  # constant cycle
        D.lower_to_automaton(
            D.parse_dsl("set duration=1;\na = b;\nb = a;\ninit x=0;\nx' = a;\n"))


def test_no_events_no_edges():
    ha, _ = D.lower_to_automaton(
        D.parse_dsl("set duration=1;\ninit x = 0;\nx' = -x;\n"))
    assert ha.edges == []


def test_constant_chain_inlined():
    m = D.parse_dsl(
        "set duration=1;\ng = 9.81;\nl = 1.2;\nr = g/l;\ninit x=0;\nx' = r*x;\n")
    ha, _ = D.lower_to_automaton(m)
    assert ha.flows["main"]["x"] is ex.mul(ex.const(9.81 / 1.2), ex.var("x"))


# ------------------------------------------------------------------- JSON


THERMO = """{
  "variables": ["T"],
  "locations": [
    {"name": "heat", "flow": {"T": "0.1*(26 - T)"}},
    {"name": "cool", "flow": {"T": "-0.1*(T - 14)"}}
  ],
  "edges": [
    {"from": "heat", "to": "cool", "guard": "T >= 21"},
    {"from": "cool", "to": "heat", "guard": "T <= 19"}
  ],
  "init": {"location": "heat", "box": {"T": [20, 20.1]}},
  "config": {"duration": 15.0}
}"""


def test_json_thermostat():
    ha, settings = parse_json_automaton(THERMO)
    assert len(ha.flows) == 2 and len(ha.edges) == 2
    assert ha.initial_location == "heat"
    assert settings["duration"] == 15.0


def test_json_empty_edges_ok():
    doc = """{
      "variables": ["x"],
      "locations": [{"name": "l", "flow": {"x": "-x"}}],
      "edges": [],
      "init": {"location": "l", "box": {"x": [0, 1]}},
      "config": {"duration": 1.0}
    }"""
    ha, _ = parse_json_automaton(doc)
    assert ha.edges == []


@pytest.mark.parametrize("mutation, path_piece", [
    ('"to": "cool"', ('"to": "nowhere"', "/edges/0/to")),
    ('"guard": "T >= 21"', ('"guard": "T >="', "/edges/0/guard")),
    ('"location": "heat"', ('"location": "oven"', "/init/location")),
    ('"T": [20, 20.1]', ('"T": [20]', "/init/box/T")),
    ('"duration": 15.0', ('"unknown_key": 1', "/config")),
])
def test_json_schema_errors_carry_paths(mutation, path_piece):
    bad_text, expected_path = path_piece
    doc = THERMO.replace(mutation, bad_text)
    with pytest.raises(SchemaError) as info:
        parse_json_automaton(doc)
    assert expected_path in str(info.value)
