import json
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from pel.core import NIL
from pel.errors import BackendError, CoercionError, MixedArguments, UnparseableFix
from pel.builtins import PRINT_DOC
from pel.llm import HttpChat, MockScript, ScriptedMock, coerce_reply, parse_bool


def test_first_matching_rule_wins():
    mock = ScriptedMock("complete | hello | first\ncomplete | hello | second")
    assert mock.complete("hello there") == "first"


def test_patterns_all_must_match():
    mock = ScriptedMock("complete | a && b | both\ncomplete | * | any")
    assert mock.complete("a b") == "both"
    assert mock.complete("a") == "any"


def test_kind_must_match():
    mock = ScriptedMock("summarize | * | s")
    with pytest.raises(BackendError):
        mock.complete("x")


def test_default_error_and_echo():
    with pytest.raises(BackendError):
        ScriptedMock().complete("x")
    assert ScriptedMock("@default echo").complete("abc") == "abc"


def test_comments_and_newline_escapes():
    mock = ScriptedMock("# note\n\ncomplete | * | a\\nb")
    assert mock.complete("q") == "a\nb"


def test_bad_script_lines():
    with pytest.raises(ValueError):
        MockScript.parse("nonsense")
    with pytest.raises(ValueError):
        MockScript.parse("bogus | * | x")
    with pytest.raises(ValueError):
        MockScript.parse("@default maybe")


def test_latency_directive():
    mock = ScriptedMock("@latency complete 0.05\ncomplete | * | ok")
    t0 = time.perf_counter()
    mock.complete("q")
    assert time.perf_counter() - t0 >= 0.05


def test_calls_are_logged():
    mock = ScriptedMock("@default echo")
    mock.summarize_text("abc")
    (kind, prompt), = mock.calls
    assert kind == "summarize" and "abc" in prompt


def test_deterministic():
    script = "@default echo"
    assert ScriptedMock(script).summarize_text("x") == ScriptedMock(script).summarize_text("x")


@pytest.mark.parametrize(
    "reply, value", [("true", True), ("TRUE", True), ("yes", True), ("False.", False), ("no", False), ("#f", False)]
)
def test_parse_bool(reply, value):
    assert parse_bool(reply) is value


def test_eval_condition_unparseable():
    mock = ScriptedMock("condition | * | maybe")
    with pytest.raises(BackendError) as ei:
        mock.eval_condition('[:tier "gold"]', "is a premium member")
    assert "unparseable boolean" in ei.value.message


def test_eval_condition_prompt_has_scrut_and_condition():
    mock = ScriptedMock("condition | is a premium member | true")
    assert mock.eval_condition('[:tier "gold"]', "is a premium member") is True
    assert '[:tier "gold"]' in mock.calls[0][1]


def test_unmatched_condition_raises():
    with pytest.raises(BackendError):
        ScriptedMock().eval_condition("1", "is odd")


@pytest.mark.parametrize(
    "reply, expect, value",
    [(" 50000 ", "num", 50000), ("2.5", "num", 2.5), ("hi ", "string", "hi"), ("yes", "bool", True)],
)
def test_coerce(reply, expect, value):
    assert coerce_reply(reply, expect) == value


@pytest.mark.parametrize("reply, expect", [("a lot", "num"), ("1e5", "num"), ("perhaps", "bool"), ("x", "json")])
def test_coerce_failures(reply, expect):
    with pytest.raises(CoercionError):
        coerce_reply(reply, expect)


def test_agent_reply_num():
    mock = ScriptedMock("agent | [agent MAIN/FINANCE] && budget | 50000")
    assert mock.agent_reply("MAIN/FINANCE", "the budget?", NIL, "num") == 50000


def test_agent_reply_bad_number():
    mock = ScriptedMock("agent | * | a lot")
    with pytest.raises(CoercionError):
        mock.agent_reply("MAIN/FINANCE", "the budget?", NIL, "num")


def test_propose_fix():
    mock = ScriptedMock(
        "fix | Mixing named and positional && (print [\"hello\" name] :sep \" \") | (print :vals [\"hello\" name] :sep \" \")"
    )
    err = MixedArguments("Mixing named and positional arguments is not allowed.")
    fix = mock.propose_fix(err, '(print ["hello" name] :sep " ")', PRINT_DOC)
    assert fix == '(print :vals ["hello" name] :sep " ")'
    assert "FUNCTION SIGNATURE: (print" in mock.calls[0][1]


def test_propose_fix_strips_fences():
    mock = ScriptedMock("fix | * | ```pel\\n(+ 1 2)\\n```")
    assert mock.propose_fix(MixedArguments("m"), "(x)") == "(+ 1 2)"


def test_propose_fix_unparseable():
    mock = ScriptedMock("fix | * | (print")
    with pytest.raises(UnparseableFix):
        mock.propose_fix(MixedArguments("m"), "(x)")


def test_propose_fix_backend_error():
    with pytest.raises(BackendError):
        ScriptedMock().propose_fix(MixedArguments("m"), "(x)")


def test_summarize_text():
    assert ScriptedMock("summarize | abc | scripted").summarize_text("abc") == "scripted"
    with pytest.raises(BackendError):
        ScriptedMock("@default echo").summarize_text("  ")


def test_http_not_configured(monkeypatch):
    monkeypatch.delenv("PEL_LLM_URL", raising=False)
    with pytest.raises(BackendError) as ei:
        HttpChat().complete("hi")
    assert "not configured" in ei.value.message


class _Handler(BaseHTTPRequestHandler):
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        _Handler.seen.append((self.path, self.headers.get("Authorization"), body))
        reply = {"choices": [{"message": {"role": "assistant", "content": "true"}}]}
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


def test_http_round_trip_against_local_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}/v1"
        chat = HttpChat(base_url=url, model="m", api_key="k")
        assert chat.eval_condition("1", "is odd") is True
        path, auth, body = _Handler.seen[-1]
        assert path == "/v1/chat/completions"
        assert auth == "Bearer k"
        assert body["model"] == "m" and "is odd" in body["messages"][0]["content"]
    finally:
        server.shutdown()


def test_http_unreachable():
    with pytest.raises(BackendError):
        HttpChat(base_url="http://127.0.0.1:9", timeout=1).complete("x")
