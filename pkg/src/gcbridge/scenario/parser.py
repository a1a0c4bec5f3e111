"""Line-oriented scenario scripts.

One command per line, ``#`` starts a comment, arguments are shell-style
tokens (double quotes for text containing spaces)::

    NEW <name> <type> [GC] "<repr>" [NATIVE|MANAGED]
    LINK <name> <slot> <child|NONE> [SILENT]
    UNLINK <name> <slot> [SILENT]
    HANDLE <name>            DROP <name>
    PASSN <new> <managed>    PASSM <new> <native>
    MIRROR <name>            NOTIFY <name>
    GC [ONLY]                PROCESS
    WEAK <new> <referent> [REF|PROXY|CALLABLE] [CALLBACK <id>]
    DEREF <weak> [NATIVE|MANAGED] [EXPECT <name>|EXPECT CLEARED] [BIND <new>]
    REALLOC <name> ["<repr>"]
    ENTER|EXIT|ALLOW|ENDALLOW <actor>
    REPORT                   ASSERT_LEAKS <n>          CLEAR_HISTORY
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

from gcbridge.errors import ParseError, UnboundName

VERBS = (
    "NEW", "LINK", "UNLINK", "HANDLE", "DROP", "PASSN", "PASSM", "MIRROR", "NOTIFY",
    "GC", "PROCESS", "WEAK", "DEREF", "ENTER", "EXIT", "ALLOW", "ENDALLOW", "REPORT",
    "ASSERT_LEAKS", "CLEAR_HISTORY", "REALLOC",
)
LOCK_VERBS = {"ENTER": "enter_native", "EXIT": "exit_native",
              "ALLOW": "begin_allow", "ENDALLOW": "end_allow"}
WEAK_KINDS = {"REF": "ref", "PROXY": "proxy", "CALLABLE": "callable_proxy"}


@dataclass(frozen=True)
class Command:
    verb: str
    args: Tuple[str, ...] = ()
    line_no: int = 0
    opts: Dict[str, object] = field(default_factory=dict, compare=False, hash=False)

    def to_line(self) -> str:
        return " ".join([self.verb, *(quote(a) for a in self.args)])


def quote(token: str) -> str:
    if token and all(c.isalnum() or c in "_-.:/[]" for c in token):
        return token
    return '"' + token.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _int(tok: str, line_no: int, what: str) -> int:
    try:
        value = int(tok)
    except ValueError:
        raise ParseError(line_no, f"{what} must be an integer, got {tok!r}") from None
    if value < 0:
        raise ParseError(line_no, f"{what} must be non-negative")
    return value


def _parse_one(verb: str, args: List[str], line_no: int) -> Tuple[Dict[str, object], List[str], List[str]]:
    """Return (opts, names used, names bound)."""
    n = len(args)

    def need(lo: int, hi: int) -> None:
        if not lo <= n <= hi:
            raise ParseError(line_no, f"{verb} takes {lo}..{hi} arguments, got {n}")

    if verb == "NEW":
        need(3, 5)
        name, type_name, rest = args[0], args[1], args[2:]
        gc = False
        if rest and rest[0] == "GC":
            gc, rest = True, rest[1:]
        if not rest:
            raise ParseError(line_no, "NEW needs a repr text")
        repr_text, rest = rest[0], rest[1:]
        side = "NATIVE"
        if rest:
            if rest[0] not in ("NATIVE", "MANAGED") or len(rest) > 1:
                raise ParseError(line_no, f"bad NEW trailer {rest}")
            side = rest[0]
        return ({"name": name, "type": type_name, "gc": gc, "repr": repr_text,
                 "managed": side == "MANAGED"}, [], [name])
    if verb in ("LINK", "UNLINK"):
        if verb == "LINK":
            need(3, 4)
            child = None if args[2] == "NONE" else args[2]
            flags = args[3:]
        else:
            need(2, 3)
            child, flags = None, args[2:]
        if flags and flags != ["SILENT"]:
            raise ParseError(line_no, f"unexpected {flags}")
        opts = {"name": args[0], "slot": _int(args[1], line_no, "slot"),
                "child": child, "silent": bool(flags)}
        return opts, [args[0]] + ([child] if child else []), []
    if verb in ("HANDLE", "DROP", "MIRROR", "NOTIFY"):
        need(1, 1)
        return {"name": args[0]}, [args[0]], []
    if verb in ("PASSN", "PASSM"):
        need(2, 2)
        return {"new": args[0], "src": args[1]}, [args[1]], [args[0]]
    if verb == "GC":
        need(0, 1)
        if args and args[0] != "ONLY":
            raise ParseError(line_no, "GC accepts only the ONLY flag")
        return {"process": not args}, [], []
    if verb in ("PROCESS", "REPORT", "CLEAR_HISTORY"):
        need(0, 0)
        return {}, [], []
    if verb == "ASSERT_LEAKS":
        need(1, 1)
        return {"count": _int(args[0], line_no, "leak count")}, [], []
    if verb == "WEAK":
        need(2, 5)
        opts = {"new": args[0], "referent": args[1], "kind": "ref", "callback": None}
        rest = args[2:]
        if rest and rest[0] in WEAK_KINDS:
            opts["kind"] = WEAK_KINDS[rest[0]]
            rest = rest[1:]
        if rest:
            if rest[0] != "CALLBACK" or len(rest) != 2:
                raise ParseError(line_no, f"bad WEAK trailer {rest}")
            opts["callback"] = rest[1]
        return opts, [args[1]], [args[0]]
    if verb == "DEREF":
        need(1, 6)
        opts = {"weak": args[0], "side": None, "expect": None, "bind": None}
        used, bound = [args[0]], []
        rest = args[1:]
        if rest and rest[0] in ("NATIVE", "MANAGED"):
            opts["side"] = rest[0]
            rest = rest[1:]
        while rest:
            if rest[0] == "EXPECT" and len(rest) >= 2:
                opts["expect"] = rest[1]
                if rest[1] != "CLEARED":
                    used.append(rest[1])
                rest = rest[2:]
            elif rest[0] == "BIND" and len(rest) >= 2:
                opts["bind"] = rest[1]
                bound.append(rest[1])
                rest = rest[2:]
            else:
                raise ParseError(line_no, f"bad DEREF trailer {rest}")
        return opts, used, bound
    if verb == "REALLOC":
        need(1, 2)
        return {"name": args[0], "repr": args[1] if n == 2 else None}, [args[0]], []
    if verb in LOCK_VERBS:
        need(1, 1)
        return {"actor": args[0], "op": LOCK_VERBS[verb]}, [], []
    raise ParseError(line_no, f"unknown verb {verb!r}")


def parse_line(line: str, line_no: int, bound: Optional[Set[str]] = None) -> Optional[Command]:
    try:
        tokens = shlex.split(line, comments=True, posix=True)
    except ValueError as exc:
        raise ParseError(line_no, str(exc)) from None
    if not tokens:
        return None
    verb, args = tokens[0].upper(), tokens[1:]
    if verb not in VERBS:
        raise ParseError(line_no, f"unknown verb {tokens[0]!r}")
    opts, used, newly = _parse_one(verb, args, line_no)
    if bound is not None:
        for name in used:
            if name not in bound:
                raise UnboundName(line_no, f"name {name!r} used before it is bound")
        bound.update(newly)
    return Command(verb, tuple(args), line_no, opts)


def parse(text: str) -> List[Command]:
    bound: Set[str] = set()
    commands = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        cmd = parse_line(line, line_no, bound)
        if cmd is not None:
            commands.append(cmd)
    return commands


def render(commands: List[Command]) -> str:
    return "\n".join(c.to_line() for c in commands) + ("\n" if commands else "")
