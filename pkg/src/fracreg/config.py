"""The one structured-text config format used across all subcommands.

Syntax, line oriented:

    # comment (also allowed after a value)
    key = value
    dotted.key = value
    list_key = [1, 2.5, 3]

Values are integers, floats, booleans (true/false), bare or double-quoted
strings, or flat lists of numbers.  Keys may repeat neither; unknown keys are
rejected by each schema so typos fail before any computation starts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from fracreg.errors import ConfigError

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


@dataclass(frozen=True)
class Entry:
    value: object
    line: int


def _parse_scalar(token: str, key: str, line: int):
    token = token.strip()
    if not token:
        raise ConfigError("line %d: empty value for %r" % (line, key), key=key, line=line)
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        return token[1:-1]
    low = token.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse config text into an ordered mapping key -> Entry(value, line)."""
    entries: dict[str, Entry] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw
        if '"' not in line:
            line = line.split("#", 1)[0]
        else:
            # strip a trailing comment only when it follows the closing quote
            m = re.match(r'^([^"#]*"[^"]*"[^#"]*)#.*$', line)
            if m:
                line = m.group(1)
            elif line.lstrip().startswith("#"):
                line = ""
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                "%s:%d: expected key = value" % (source, lineno), line=lineno
            )
        key, _, rhs = line.partition("=")
        key = key.strip()
        rhs = rhs.strip()
        if not _KEY_RE.match(key):
            raise ConfigError("%s:%d: bad key %r" % (source, lineno, key), key=key, line=lineno)
        if key in entries:
            raise ConfigError(
                "%s:%d: duplicate key %r (first on line %d)"
                % (source, lineno, key, entries[key].line),
                key=key, line=lineno,
            )
        if rhs.startswith("["):
            if not rhs.endswith("]"):
                raise ConfigError(
                    "%s:%d: unterminated list for %r" % (source, lineno, key),
                    key=key, line=lineno,
                )
            inner = rhs[1:-1].strip()
            items = [t for t in (part.strip() for part in inner.split(",")) if t] if inner else []
            value = [_parse_scalar(t, key, lineno) for t in items]
            if any(isinstance(v, (str, bool)) for v in value):
                raise ConfigError(
                    "%s:%d: lists may contain numbers only (%r)" % (source, lineno, key),
                    key=key, line=lineno,
                )
        else:
            value = _parse_scalar(rhs, key, lineno)
        entries[key] = Entry(value=value, line=lineno)
    return entries


def _format_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, int):
        return str(value)
    text = str(value)
    if text != text.strip() or any(c in text for c in '#="[]') or " " in text:
        return '"%s"' % text
    return text


def serialize(mapping: dict) -> str:
    """Render key -> value (Entry values or plain values) back to config text."""
    lines = []
    for key, value in mapping.items():
        if isinstance(value, Entry):
            value = value.value
        if isinstance(value, (list, tuple)):
            body = ", ".join(_format_scalar(v) for v in value)
            lines.append("%s = [%s]" % (key, body))
        else:
            lines.append("%s = %s" % (key, _format_scalar(value)))
    return "\n".join(lines) + "\n"


def apply_overrides(entries: dict, overrides) -> dict:
    """Apply key=value strings (--set) on top of parsed entries."""
    out = dict(entries)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("override %r is not of the form key=value" % item, key=item)
        key, _, rhs = item.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError("override has a bad key %r" % key, key=key)
        parsed = parse_text("%s = %s" % (key, rhs.strip()), source="<override>")
        out[key] = parsed[key]
    return out


class ConfigView:
    """Typed, validated access to parsed entries; tracks unconsumed keys."""

    def __init__(self, entries: dict, source: str = "<config>"):
        self.entries = entries
        self.source = source
        self._used: set[str] = set()

    def _fail(self, key, message):
        line = self.entries[key].line if key in self.entries else None
        where = "%s: " % self.source
        if line is not None:
            where = "%s:%d: " % (self.source, line)
        raise ConfigError(where + message, key=key, line=line)

    def has(self, key) -> bool:
        return key in self.entries

    def raw(self, key, default=None):
        self._used.add(key)
        if key in self.entries:
            return self.entries[key].value
        return default

    def require(self, key):
        if key not in self.entries:
            raise ConfigError("%s: missing required key %r" % (self.source, key), key=key)
        return self.raw(key)

    def get_str(self, key, default=None, required=False):
        val = self.require(key) if required else self.raw(key, default)
        if val is None:
            return None
        if not isinstance(val, str):
            self._fail(key, "%r must be a string" % key)
        return val

    def get_bool(self, key, default=False):
        val = self.raw(key, default)
        if not isinstance(val, bool):
            self._fail(key, "%r must be true or false" % key)
        return val

    def get_int(self, key, default=None, required=False, minimum=None):
        val = self.require(key) if required else self.raw(key, default)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, int):
            self._fail(key, "%r must be an integer" % key)
        if minimum is not None and val < minimum:
            self._fail(key, "%r must be at least %d" % (key, minimum))
        return val

    def get_float(self, key, default=None, required=False,
                  gt=None, ge=None, lt=None, le=None):
        val = self.require(key) if required else self.raw(key, default)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self._fail(key, "%r must be a number" % key)
        val = float(val)
        if gt is not None and not val > gt:
            self._fail(key, "%r must be greater than %s" % (key, gt))
        if ge is not None and not val >= ge:
            self._fail(key, "%r must be at least %s" % (key, ge))
        if lt is not None and not val < lt:
            self._fail(key, "%r must be less than %s" % (key, lt))
        if le is not None and not val <= le:
            self._fail(key, "%r must be at most %s" % (key, le))
        return val

    def get_unit_open(self, key, default=None, required=False):
        """A float strictly inside (0, 1); the usual smoothness order check."""
        val = self.require(key) if required else self.raw(key, default)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not 0.0 < float(val) < 1.0:
            self._fail(key, "%r must lie in (0,1)" % key)
        return float(val)

    def get_list(self, key, default=None, required=False, kind=float):
        val = self.require(key) if required else self.raw(key, default)
        if val is None:
            return None
        if not isinstance(val, (list, tuple)):
            self._fail(key, "%r must be a list" % key)
        out = []
        for v in val:
            if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
                self._fail(key, "%r must be a list of integers" % key)
            out.append(kind(v))
        return list(out)

    def reject_unknown(self):
        unknown = [k for k in self.entries if k not in self._used]
        if unknown:
            first = unknown[0]
            self._fail(first, "unknown key %r" % first)
