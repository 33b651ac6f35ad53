import io
import json
import time

import pytest

from pel.agents import Organisation, load_org, parse_org
from pel.core import ListLit, Pair, display
from pel.errors import (
    BackendError,
    CoercionError,
    MalformedOrg,
    PreconditionFailed,
    RouterCodeInvalid,
    TypeMismatch,
    UnknownAgent,
)
from pel.evaluator import Interpreter
from pel.llm import MockScript, ScriptedMock
from pel.parser import parse
from pel.scheduler import run_concurrent
from conftest import DATA

TINY = [
    {"path": "R", "kind": "router", "children": ["R/A", "R/B"]},
    {"path": "R/A", "kind": "terminal", "role": "answers A"},
    {"path": "R/B", "kind": "terminal"},
]


def setup(script, specs=TINY, **kw):
    mock = ScriptedMock(script)
    interp = Interpreter(backend=mock, out=io.StringIO())
    org = Organisation(parse_org(specs), **kw)
    org.install(interp)
    return interp, org, mock


def scenario():
    mock = ScriptedMock(MockScript.load(DATA / "scenario.mock"))
    interp = Interpreter(backend=mock, out=io.StringIO())
    org = load_org(DATA / "org.json")
    org.install(interp)
    value = org.run_task(interp, "plan a social media campaign")
    return value, org, mock


# -- org files ------------------------------------------------------------------


@pytest.mark.parametrize(
    "data, fragment",
    [
        ([], "non-empty"),
        ({"path": "R"}, "non-empty"),
        ([{"kind": "terminal"}], "path"),
        ([{"path": "R", "kind": "boss"}], "kind"),
        ([{"path": "R", "kind": "router"}], "no children"),
        ([{"path": "R", "kind": "terminal", "children": ["R/A"]}, {"path": "R/A", "kind": "terminal"}], "cannot have"),
        ([{"path": "R", "kind": "router", "children": ["R/X"]}], "unknown child"),
        ([{"path": "R", "kind": "router", "children": ["A"]}, {"path": "A", "kind": "terminal"}], "must be named"),
        ([{"path": "R", "kind": "terminal"}, {"path": "R", "kind": "terminal"}], "duplicate"),
    ],
)
def test_malformed_orgs(data, fragment):
    with pytest.raises(MalformedOrg) as ei:
        parse_org(data)
    assert fragment in ei.value.message


def test_load_org_bad_json(tmp_path):
    p = tmp_path / "org.json"
    p.write_text("[{")
    with pytest.raises(MalformedOrg):
        load_org(p)


def test_load_org_roots_at_main():
    org = load_org(DATA / "org.json")
    assert org.root == "MAIN"
    assert list(org.get("MAIN/MARKETING").children) == [
        "MAIN/MARKETING/SOCIAL_MEDIA",
        "MAIN/MARKETING/CONTENT_MARKETING",
    ]


def test_unknown_agent_lookup():
    org = Organisation(parse_org(TINY))
    with pytest.raises(UnknownAgent):
        org.get("R/C")


# -- terminals ------------------------------------------------------------------


def test_terminal_call_from_pel():
    interp, org, mock = setup("agent | [agent R/A] && hello | 42")
    assert interp.run('(R/A :query "hello" :expect "num")') == 42
    assert "answers A" in mock.calls[0][1]
    assert org.events[0].startswith("CALL R/A")


def test_terminal_reply_default_is_string():
    interp, _, _ = setup("agent | * | 42")
    assert interp.run('(R/A :query "q")') == "42"


def test_agent_call_is_partial_without_query():
    interp, _, mock = setup("agent | * | x")
    interp.run('(def ask (R/A :expect "string"))')
    assert mock.calls == []
    assert interp.run('(ask "q")') == "x"


def test_query_must_be_string():
    interp, _, _ = setup("agent | * | x")
    with pytest.raises(TypeMismatch):
        interp.run("(R/A :query 5)")


def test_bad_expect():
    interp, _, _ = setup("agent | * | x")
    with pytest.raises(TypeMismatch):
        interp.run('(R/A :query "q" :expect "list")')


def test_coercion_failure():
    interp, _, _ = setup("agent | * | plenty")
    with pytest.raises(CoercionError):
        interp.run('(R/A :query "q" :expect "num")')


def test_no_backend():
    interp = Interpreter(out=io.StringIO())
    Organisation(parse_org(TINY)).install(interp)
    with pytest.raises(BackendError):
        interp.run('(R/A :query "q")')


def test_context_reaches_the_prompt():
    interp, _, mock = setup("agent | * | ok")
    interp.run('(R/A :query "q" :context [:budget 7])')
    assert "[:budget 7]" in mock.calls[0][1]


# -- routers --------------------------------------------------------------------


def test_router_runs_its_program():
    script = "agent | [agent R] [mode router] | (R/A :query \"x\" :expect \"num\") ▷ (+ 1)\nagent | [agent R/A] | 41"
    interp, org, _ = setup(script)
    assert org.run_task(interp, "go") == 42


def test_router_sees_context_under_its_alias():
    script = "agent | [agent R] [mode router] | (+ budget context)"
    interp, _, _ = setup(script)
    interp.run("(def budget 5)")
    assert interp.run('(R :query "q" :context budget :expect "num")') == 10


def test_router_cannot_reach_outside_its_children():
    specs = TINY + [{"path": "R/B/C", "kind": "terminal"}]
    specs = [dict(s) for s in specs]
    specs[2] = {"path": "R/B", "kind": "router", "children": ["R/B/C"]}
    script = 'agent | [agent R/B] [mode router] | (R/A :query "sneaky")'
    interp, _, _ = setup(script, specs)
    with pytest.raises(UnknownAgent):
        interp.run('(R/B :query "q")')


def test_router_env_is_closed():
    # the caller's globals are not visible to router code
    interp, _, _ = setup("agent | [agent R] [mode router] | secret", heal_cap=0)
    interp.run("(def secret 1)")
    with pytest.raises(Exception) as ei:
        interp.run('(R :query "q")')
    assert "secret" in str(ei.value.message)


def test_invalid_router_code_after_heals():
    script = "agent | [agent R] [mode router] | (R/A\nfix | * | (R/A"
    interp, org, mock = setup(script)
    with pytest.raises(RouterCodeInvalid):
        org.run_task(interp, "go")


def test_invalid_router_code_repaired():
    script = 'agent | [agent R] [mode router] | (+ 1\nfix | * | (+ 1 2)'
    interp, org, _ = setup(script)
    assert org.run_task(interp, "go") == 3
    assert any(e.startswith("ERROR R") for e in org.events)


def test_heal_cap_counts_attempts():
    script = 'agent | [agent R] [mode router] | (len 5)\nfix | * | (len 6)'
    interp, org, mock = setup(script, heal_cap=2)
    with pytest.raises(TypeMismatch):
        org.run_task(interp, "go")
    assert sum(1 for k, _ in mock.calls if k == "fix") == 2


def test_router_result_coerced_to_expect():
    interp, _, _ = setup('agent | [agent R] [mode router] | "12"')
    assert interp.run('(R :query "q" :expect "num")') == 12


# -- meetings --------------------------------------------------------------------


def test_meeting_turn_count():
    interp, org, mock = setup("agent | [mode meeting] | fine")
    text = interp.run('(meeting :group ["R/A" "R/B"] :rounds 2 :topic "t")')
    assert text.count("\n") == 3
    assert text.splitlines()[0] == "R/A: fine"
    assert len(mock.calls) == 4


def test_meeting_rounds_must_be_positive():
    interp, _, _ = setup("agent | * | x")
    with pytest.raises(PreconditionFailed):
        interp.run('(meeting :group ["R/A"] :rounds 0 :topic "t")')


@pytest.mark.parametrize(
    "args", [':group [] :rounds 1 :topic "t"', ':group ["R/A"] :rounds 1.5 :topic "t"', ':group ["R/A"] :rounds 1 :topic 3']
)
def test_meeting_type_errors(args):
    interp, _, _ = setup("agent | * | x")
    with pytest.raises(TypeMismatch):
        interp.run(f"(meeting {args})")


def test_meeting_unknown_member():
    interp, _, _ = setup("agent | * | x")
    with pytest.raises(UnknownAgent):
        interp.run('(meeting :group ["R/Z"] :rounds 1 :topic "t")')


# -- the planning scenario --------------------------------------------------------


def test_scenario_final_value():
    value, org, _ = scenario()
    assert isinstance(value, ListLit)
    keys = [p.key.name for p in value if isinstance(p, Pair)]
    assert keys == ["social_media_budget", "social_media_strategy"]
    assert value.items[0].value == 50000
    assert "Six-week video campaign" in value.items[1].value


def test_scenario_meeting_has_six_turns():
    _, org, mock = scenario()
    (meeting,) = [e for e in org.events if e.startswith("MEETING")]
    assert "turns=6" in meeting
    assert len(meeting.splitlines()) == 7
    kinds = [k for k, _ in mock.calls]
    assert kinds.count("summarize") == 1


def test_scenario_is_byte_identical():
    a, org_a, _ = scenario()
    b, org_b, _ = scenario()
    assert display(a) == display(b)
    assert org_a.transcript() == org_b.transcript()


def test_org_json_is_valid_json():
    assert len(json.loads((DATA / "org.json").read_text())) == 6


# -- asynchronous routers ----------------------------------------------------------


def timing_run(async_mode):
    mock = ScriptedMock(MockScript.load(DATA / "timing.mock"))
    interp = Interpreter(backend=mock, out=io.StringIO())
    load_org(DATA / "org.json").install(interp)
    program = parse((DATA / "timing.pel").read_text())
    t0 = time.perf_counter()
    if async_mode:
        value = run_concurrent(program, interp, max_tasks=4)
    else:
        value = interp.run((DATA / "timing.pel").read_text())
    return value, time.perf_counter() - t0


def test_timing_scenario_async_is_faster():
    v_seq, t_seq = timing_run(False)
    v_async, t_async = timing_run(True)
    assert v_seq == v_async == "Revenue 1.2M against 0.9M costs; West leads sales."
    assert t_seq >= 0.2
    assert t_async < 0.9 * t_seq


def test_async_router_program_runs_concurrently():
    script = (
        "@latency agent 0.1\n"
        'agent | [agent R] [mode router] | (R/A :query "a") ▷ (def a ^)\\n(R/B :query "b") ▷ (def b ^)\\n(concat a b)\n'
        "agent | [agent R/A] | x\nagent | [agent R/B] | y"
    )
    trace = []
    interp, org, _ = setup(script, async_mode=True, max_tasks=4, trace=trace)
    assert org.run_task(interp, "go") == "xy"
    starts = {ev.index: ev.at for ev in trace if ev.kind == "start"}
    finish = {ev.index: ev.at for ev in trace if ev.kind == "finish"}
    # forms 0 and 1 overlap
    assert starts[1] < finish[0] and starts[0] < finish[1]
