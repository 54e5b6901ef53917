"""Lexer and LALR grammar for processes, session types and workspace files."""

import logging
import threading
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, List

import ply.lex as lex
import ply.yacc as yacc

from .environments import GlobalEnv, SessionEnv
from .errors import ParseError
from .session_types import (
    BOOL,
    AtomSort,
    GChoice,
    GEnd,
    GlobalSort,
    GMsg,
    GRec,
    GVar,
    LBranch,
    LEnd,
    LRecv,
    LRec,
    LSelect,
    LSend,
    LVar,
    is_guarded,
    sorted_branches,
)
from .syntax import (
    FALSE,
    INACT,
    TRUE,
    Accept,
    And,
    Branch,
    Endpoint,
    Hide,
    If,
    NameEq,
    Name,
    Par,
    ProcVar,
    Rec,
    Recv,
    Request,
    Select,
    Send,
    Var,
    map_expr,
    map_shallow,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Declaration:
    kind: str
    name: str
    value: Any
    line: int


class MpstGrammar:
    reserved = {
        "if": "IF",
        "then": "THEN",
        "else": "ELSE",
        "new": "NEW",
        "rec": "REC",
        "true": "TRUE",
        "false": "FALSE",
        "and": "AND",
        "end": "END",
        "bool": "BOOL",
        "global": "GLOBAL",
        "proc": "PROC",
        "gamma": "GAMMA",
        "delta": "DELTA",
        "witness": "WITNESS",
        "sessions": "SESSIONS",
        "values": "VALUES",
    }

    tokens = [
        "ID", "INT", "SELECT", "ARROW", "EQEQ", "EQUALS", "TILDE", "BANG", "QUERY",
        "AMP", "BAR", "DOT", "COMMA", "COLON", "SEMI", "LPAREN", "RPAREN",
        "LBRACKET", "RBRACKET", "LBRACE", "RBRACE", "LANGLE", "RANGLE",
    ] + sorted(set(reserved.values()))

    precedence = (
        ("left", "BAR"),
        ("left", "AND"),
        ("right", "PREFIX"),
    )

    t_ignore = " \t\r"
    t_ARROW = r"->"
    t_EQEQ = r"=="
    t_EQUALS = r"="
    t_TILDE = r"~"
    t_BANG = r"!"
    t_QUERY = r"\?"
    t_AMP = r"&"
    t_BAR = r"\|"
    t_DOT = r"\."
    t_COMMA = r","
    t_COLON = r":"
    t_SEMI = r";"
    t_LPAREN = r"\("
    t_RPAREN = r"\)"
    t_LBRACKET = r"\["
    t_RBRACKET = r"\]"
    t_LBRACE = r"\{"
    t_RBRACE = r"\}"
    t_LANGLE = r"<"
    t_RANGLE = r">"

    def __init__(self):
        self.text = ""
        self.lexer = lex.lex(module=self)

    def column(self, lexpos: int) -> int:
        start = self.text.rfind("\n", 0, lexpos) + 1
        return lexpos - start + 1

    def _fail(self, message: str, p, index: int = 1):
        raise ParseError(message, p.lineno(index), self.column(p.lexpos(index)))

    # ── Lexer ──

    def t_SELECT(self, t):
        r"\(\+\)"
        return t

    def t_COMMENT(self, t):
        r"//[^\n]*"
        pass

    def t_ID(self, t):
        r"[A-Za-z_#][A-Za-z0-9_'#]*"
        t.type = self.reserved.get(t.value, "ID")
        return t

    def t_INT(self, t):
        r"\d+"
        t.value = int(t.value)
        return t

    def t_newline(self, t):
        r"\n+"
        t.lexer.lineno += len(t.value)

    def t_error(self, t):
        raise ParseError(f"illegal character {t.value[0]!r}", t.lineno, self.column(t.lexpos))

    def p_error(self, p):
        if p is None:
            line = self.text.count("\n") + 1
            raise ParseError("unexpected end of input", line, self.column(len(self.text)))
        raise ParseError(f"unexpected {p.value!r}", p.lineno, self.column(p.lexpos))

    # ── Processes ──

    def _role(self, p, index: int) -> int:
        if p[index] < 1:
            self._fail(f"role {p[index]} must be positive", p, index)
        return p[index]

    def p_process_par(self, p):
        "process : process BAR process"
        p[0] = Par(p[1], p[3])

    def p_process_request(self, p):
        "process : ID TILDE LBRACKET INT RBRACKET LPAREN ID RPAREN DOT process %prec PREFIX"
        p[0] = Request(Var(p[1]), self._role(p, 4), p[7], p[10])

    def p_process_accept(self, p):
        "process : ID LBRACKET INT RBRACKET LPAREN ID RPAREN DOT process %prec PREFIX"
        p[0] = Accept(Var(p[1]), self._role(p, 3), p[6], p[9])

    def p_process_send(self, p):
        "process : head BANG LANGLE expr RANGLE DOT process %prec PREFIX"
        channel, peer = p[1]
        p[0] = Send(channel, peer, p[4], p[7])

    def p_process_recv(self, p):
        "process : head QUERY LPAREN ID RPAREN DOT process %prec PREFIX"
        channel, peer = p[1]
        p[0] = Recv(channel, peer, p[4], p[7])

    def p_process_select(self, p):
        "process : head SELECT ID DOT process %prec PREFIX"
        channel, peer = p[1]
        p[0] = Select(channel, peer, p[3], p[5])

    def p_process_branch(self, p):
        "process : head AMP LBRACE arms RBRACE"
        channel, peer = p[1]
        p[0] = Branch(channel, peer, sorted_branches(self._distinct(p[4], p)))

    def p_process_if(self, p):
        "process : IF expr THEN process ELSE process %prec PREFIX"
        p[0] = If(p[2], p[4], p[6])

    def p_process_inact(self, p):
        "process : INT"
        if p[1] != 0:
            self._fail(f"unexpected {p[1]!r}", p)
        p[0] = INACT

    def p_process_new(self, p):
        "process : LPAREN NEW ID RPAREN process %prec PREFIX"
        p[0] = Hide(p[3], p[5])

    def p_process_new_sorted(self, p):
        "process : LPAREN NEW ID COLON sort RPAREN process %prec PREFIX"
        p[0] = Hide(p[3], p[7], p[5])

    def p_process_rec(self, p):
        "process : REC ID DOT process %prec PREFIX"
        p[0] = Rec(p[2], p[4])

    def p_process_var(self, p):
        "process : ID"
        p[0] = ProcVar(p[1])

    def p_process_group(self, p):
        "process : LPAREN process RPAREN"
        p[0] = p[2]

    def p_head_var(self, p):
        "head : ID LBRACKET INT RBRACKET"
        p[0] = (Var(p[1]), self._role(p, 3))

    def p_head_endpoint(self, p):
        "head : ID LBRACKET INT RBRACKET LBRACKET INT RBRACKET"
        p[0] = (Endpoint(p[1], self._role(p, 3)), self._role(p, 6))

    def p_arms(self, p):
        """arms : arm
                | arms COMMA arm"""
        p[0] = [p[1]] if len(p) == 2 else p[1] + [p[3]]

    def p_arm(self, p):
        "arm : ID COLON process"
        p[0] = (p[1], p[3], p.lineno(1), p.lexpos(1))

    def _distinct(self, arms, p):
        seen = set()
        for label, _, line, pos in arms:
            if label in seen:
                raise ParseError(f"duplicate label {label!r}", line, self.column(pos))
            seen.add(label)
        return [(label, body) for label, body, _, _ in arms]

    # ── Expressions ──

    def p_expr_and(self, p):
        "expr : expr AND expr"
        p[0] = And(p[1], p[3])

    def p_expr_eq(self, p):
        "expr : value EQEQ value"
        p[0] = NameEq(p[1], p[3])

    def p_expr_value(self, p):
        "expr : value"
        p[0] = p[1]

    def p_value_true(self, p):
        "value : TRUE"
        p[0] = TRUE

    def p_value_false(self, p):
        "value : FALSE"
        p[0] = FALSE

    def p_value_id(self, p):
        "value : ID"
        p[0] = Var(p[1])

    def p_value_endpoint(self, p):
        "value : ID LBRACKET INT RBRACKET"
        p[0] = Endpoint(p[1], self._role(p, 3))

    def p_value_group(self, p):
        "value : LPAREN expr RPAREN"
        p[0] = p[2]

    # ── Types ──

    def _pair(self, p, src: int, dst: int):
        self._role(p, src)
        self._role(p, dst)
        if p[src] == p[dst]:
            self._fail(f"interaction {p[src]}->{p[dst]} needs two distinct roles", p, src)
        return p[src], p[dst]

    def p_gtype_msg(self, p):
        "gtype : INT ARROW INT COLON LANGLE exchange RANGLE DOT gtype"
        src, dst = self._pair(p, 1, 3)
        p[0] = GMsg(src, dst, p[6], p[9])

    def p_gtype_choice(self, p):
        "gtype : INT ARROW INT COLON LBRACE garms RBRACE"
        src, dst = self._pair(p, 1, 3)
        p[0] = GChoice(src, dst, sorted_branches(self._distinct(p[6], p)))

    def p_gtype_rec(self, p):
        "gtype : REC ID DOT gtype"
        p[0] = GRec(p[2], p[4])

    def p_gtype_var(self, p):
        "gtype : ID"
        p[0] = GVar(p[1])

    def p_gtype_end(self, p):
        "gtype : END"
        p[0] = GEnd()

    def p_garms(self, p):
        """garms : garm
                 | garms COMMA garm"""
        p[0] = [p[1]] if len(p) == 2 else p[1] + [p[3]]

    def p_garm(self, p):
        "garm : ID COLON gtype"
        p[0] = (p[1], p[3], p.lineno(1), p.lexpos(1))

    def p_exchange(self, p):
        """exchange : sort
                    | lhead"""
        p[0] = p[1]

    def p_sort_bool(self, p):
        "sort : BOOL"
        p[0] = BOOL

    def p_sort_atom(self, p):
        "sort : ID"
        p[0] = AtomSort(p[1])

    def p_sort_global(self, p):
        "sort : LANGLE gtype RANGLE"
        p[0] = GlobalSort(p[2])

    def p_ltype(self, p):
        "ltype : lhead"
        p[0] = p[1]

    def p_ltype_var(self, p):
        "ltype : ID"
        p[0] = LVar(p[1])

    def p_lhead_send(self, p):
        "lhead : INT BANG LANGLE exchange RANGLE DOT ltype"
        p[0] = LSend(self._role(p, 1), p[4], p[7])

    def p_lhead_recv(self, p):
        "lhead : INT QUERY LPAREN exchange RPAREN DOT ltype"
        p[0] = LRecv(self._role(p, 1), p[4], p[7])

    def p_lhead_select(self, p):
        "lhead : INT SELECT LBRACE larms RBRACE"
        p[0] = LSelect(self._role(p, 1), sorted_branches(self._distinct(p[4], p)))

    def p_lhead_branch(self, p):
        "lhead : INT AMP LBRACE larms RBRACE"
        p[0] = LBranch(self._role(p, 1), sorted_branches(self._distinct(p[4], p)))

    def p_lhead_rec(self, p):
        "lhead : REC ID DOT ltype"
        p[0] = LRec(p[2], p[4])

    def p_lhead_end(self, p):
        "lhead : END"
        p[0] = LEnd()

    def p_larms(self, p):
        """larms : larm
                 | larms COMMA larm"""
        p[0] = [p[1]] if len(p) == 2 else p[1] + [p[3]]

    def p_larm(self, p):
        "larm : ID COLON ltype"
        p[0] = (p[1], p[3], p.lineno(1), p.lexpos(1))

    # ── Workspaces ──

    def p_workspace(self, p):
        "workspace : decls"
        p[0] = p[1]

    def p_decls(self, p):
        """decls : decls decl
                 | empty"""
        p[0] = [] if len(p) == 2 else p[1] + [p[2]]

    def p_decl_global(self, p):
        "decl : GLOBAL ID EQUALS gtype SEMI"
        p[0] = Declaration("global", p[2], p[4], p.lineno(1))

    def p_decl_proc(self, p):
        "decl : PROC ID EQUALS process SEMI"
        p[0] = Declaration("proc", p[2], resolve_names(p[4]), p.lineno(1))

    def p_decl_gamma(self, p):
        "decl : GAMMA ID LBRACE sort_entries RBRACE"
        p[0] = Declaration("gamma", p[2], p[4], p.lineno(1))

    def p_decl_values(self, p):
        "decl : VALUES LBRACE sort_entries RBRACE"
        p[0] = Declaration("values", "values", p[3], p.lineno(1))

    def p_decl_delta(self, p):
        "decl : DELTA ID LBRACE delta_entries RBRACE"
        p[0] = Declaration("delta", p[2], p[4], p.lineno(1))

    def p_decl_witness(self, p):
        "decl : WITNESS ID LBRACE genv_entries RBRACE"
        p[0] = Declaration("witness", p[2], p[4], p.lineno(1))

    def p_decl_sessions(self, p):
        "decl : SESSIONS LBRACE genv_entries RBRACE"
        p[0] = Declaration("sessions", "sessions", p[3], p.lineno(1))

    def p_sort_entries(self, p):
        """sort_entries : sort_entries ID COLON sort SEMI
                        | empty"""
        p[0] = [] if len(p) == 2 else p[1] + [(p[2], p[4], p.lineno(2))]

    def p_delta_entries(self, p):
        """delta_entries : delta_entries ID LBRACKET INT RBRACKET COLON ltype SEMI
                         | empty"""
        if len(p) == 2:
            p[0] = []
        else:
            p[0] = p[1] + [(Endpoint(p[2], self._role(p, 4)), p[7], p.lineno(2))]

    def p_genv_entries(self, p):
        """genv_entries : genv_entries ID COLON gtype SEMI
                        | empty"""
        p[0] = [] if len(p) == 2 else p[1] + [(p[2], p[4], p.lineno(2))]

    def p_empty(self, p):
        "empty :"
        p[0] = None


def resolve_names(p, bound: FrozenSet[str] = frozenset()):
    """Turn identifiers not bound by a variable binder into names."""

    def fe(e):
        return map_expr(e, lambda x: Name(x.name) if isinstance(x, Var) and x.name not in bound else None)

    if isinstance(p, (Request, Accept)):
        return type(p)(fe(p.shared), p.role, p.binder, resolve_names(p.body, bound | {p.binder}))
    if isinstance(p, Recv):
        return Recv(p.channel, p.peer, p.binder, resolve_names(p.body, bound | {p.binder}))
    if isinstance(p, Send):
        return Send(p.channel, p.peer, fe(p.expr), resolve_names(p.body, bound))
    if isinstance(p, If):
        return If(fe(p.cond), resolve_names(p.then, bound), resolve_names(p.orelse, bound))
    return map_shallow(p, lambda e: e, lambda q: resolve_names(q, bound))


_LOCK = threading.Lock()
_GRAMMAR: List[MpstGrammar] = []
_PARSERS: Dict[str, Any] = {}


def _run(text: str, start: str):
    with _LOCK:
        if not _GRAMMAR:
            _GRAMMAR.append(MpstGrammar())
        grammar = _GRAMMAR[0]
        if start not in _PARSERS:
            log.debug("building %s parser tables", start)
            _PARSERS[start] = yacc.yacc(
                module=grammar,
                start=start,
                write_tables=False,
                debug=False,
                errorlog=yacc.NullLogger(),
            )
        grammar.text = text
        lexer = grammar.lexer.clone()
        lexer.lineno = 1
        return _PARSERS[start].parse(text, lexer=lexer, tracking=True)


def _check_type(t, what: str):
    if not is_guarded(t):
        raise ParseError(f"unguarded recursion in {what}")
    return t


def parse_process(text: str):
    """Parse a process; identifiers not bound by a binder become names."""
    return resolve_names(_run(text, "process"))


def parse_global(text: str):
    return _check_type(_run(text, "gtype"), "global type")


def parse_local(text: str):
    return _check_type(_run(text, "ltype"), "local type")


def parse_session_env(text: str) -> SessionEnv:
    """Parse ``s[1]: T; s[2]: T;`` into a session environment."""
    entries = _run(text, "delta_entries") or []
    return SessionEnv(_unique(entries, "endpoint"))


def parse_global_env(text: str) -> GlobalEnv:
    """Parse ``s: G; t: G;`` into a global environment."""
    entries = _run(text, "genv_entries") or []
    return GlobalEnv(_unique(entries, "session"))


def parse_workspace_text(text: str) -> List[Declaration]:
    return _run(text, "workspace") or []


def _unique(entries, what: str) -> Dict:
    result: Dict = {}
    for key, value, line in entries:
        if key in result:
            raise ParseError(f"duplicate {what} {key}", line)
        result[key] = value
    return result
