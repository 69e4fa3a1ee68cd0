"""Function-generator commands: a line-oriented text grammar and a simulated instrument.

Grammar (ASCII, one command per ``\\n``-terminated line)::

    FREQ <hz>     set frequency, 1 Hz .. 100 MHz
    VOLT <v>      set amplitude, 0 < v <= 20 Vpp
    OUTP ON|OFF   enable / disable the output
    STAT?         query; reply is ``FREQ <hz>;VOLT <v>;OUTP <ON|OFF>``

Keywords are case-insensitive and any run of spaces or tabs may separate a
keyword from its argument.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation

FREQ_MIN = 1.0
FREQ_MAX = 100e6
VOLT_MAX = 20.0


class CommandKind(enum.Enum):
    SET_FREQUENCY = "FREQ"
    SET_VOLTAGE = "VOLT"
    OUTPUT_ON = "OUTP ON"
    OUTPUT_OFF = "OUTP OFF"
    QUERY_STATE = "STAT?"


class CommandError(ValueError):
    """Base class for grammar and validation failures; ``offset`` is a byte index."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnknownKeywordError(CommandError):
    pass


class MissingArgumentError(CommandError):
    pass


class ExtraArgumentError(CommandError):
    pass


class NonNumericArgumentError(CommandError):
    pass


class OutOfRangeError(CommandError):
    pass


class FramingError(CommandError):
    """Line is not a single ASCII, newline-terminated record."""


def _check_frequency(hz: float, offset: int = 0) -> None:
    if not FREQ_MIN <= hz <= FREQ_MAX:
        raise OutOfRangeError(f"frequency {hz!r} outside [{FREQ_MIN:g}, {FREQ_MAX:g}] Hz", offset)


def _check_voltage(v: float, offset: int = 0) -> None:
    if not 0.0 < v <= VOLT_MAX:
        raise OutOfRangeError(f"voltage {v!r} outside (0, {VOLT_MAX:g}] V", offset)


@dataclass(frozen=True)
class SignalCommand:
    kind: CommandKind
    frequency: float | None = None
    voltage: float | None = None

    def __post_init__(self):
        if self.kind is CommandKind.SET_FREQUENCY:
            if self.frequency is None or self.voltage is not None:
                raise ValueError("SET_FREQUENCY takes only a frequency")
            _check_frequency(self.frequency)
        elif self.kind is CommandKind.SET_VOLTAGE:
            if self.voltage is None or self.frequency is not None:
                raise ValueError("SET_VOLTAGE takes only a voltage")
            _check_voltage(self.voltage)
        elif self.frequency is not None or self.voltage is not None:
            raise ValueError(f"{self.kind.name} takes no argument")

    @classmethod
    def set_frequency(cls, hz: float) -> "SignalCommand":
        return cls(CommandKind.SET_FREQUENCY, frequency=float(hz))

    @classmethod
    def set_voltage(cls, v: float) -> "SignalCommand":
        return cls(CommandKind.SET_VOLTAGE, voltage=float(v))


def format_number(value: float) -> str:
    """Plain decimal: integers without a point, otherwise no trailing zeros, no exponent."""
    if float(value).is_integer():
        return str(int(value))
    text = format(Decimal(repr(float(value))), "f")
    return text.rstrip("0").rstrip(".")


def serialize(command: SignalCommand) -> bytes:
    kind = command.kind
    if kind is CommandKind.SET_FREQUENCY:
        _check_frequency(command.frequency)
        body = f"FREQ {format_number(command.frequency)}"
    elif kind is CommandKind.SET_VOLTAGE:
        _check_voltage(command.voltage)
        body = f"VOLT {format_number(command.voltage)}"
    else:
        body = kind.value
    return (body + "\n").encode("ascii")


_NUMBER = re.compile(r"[+]?(\d+(\.\d*)?|\.\d+)\Z")
_BLANK = " \t"


def _parse_number(token: str, offset: int) -> float:
    if not _NUMBER.match(token):
        raise NonNumericArgumentError(f"non-numeric argument {token!r}", offset)
    try:
        return float(Decimal(token))
    except InvalidOperation:  # pragma: no cover - regex already guarantees a decimal
        raise NonNumericArgumentError(f"non-numeric argument {token!r}", offset) from None


def _tokens(text: str) -> list[tuple[str, int]]:
    out = []
    i, n = 0, len(text)
    while i < n:
        while i < n and text[i] in _BLANK:
            i += 1
        if i >= n:
            break
        start = i
        while i < n and text[i] not in _BLANK:
            i += 1
        out.append((text[start:i], start))
    return out


def parse(line: bytes | str) -> SignalCommand:
    if isinstance(line, str):
        line = line.encode("utf-8")
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FramingError("non-ASCII byte", exc.start) from None
    if text.endswith("\r\n"):
        text = text[:-2]
    elif text.endswith("\n"):
        text = text[:-1]
    for bad in ("\n", "\r"):
        pos = text.find(bad)
        if pos >= 0:
            raise FramingError("embedded line break", pos)

    toks = _tokens(text)
    if not toks:
        raise UnknownKeywordError("empty command", 0)
    (kw, kw_off), args = toks[0], toks[1:]
    key = kw.upper()

    if key in ("FREQ", "VOLT"):
        if not args:
            raise MissingArgumentError(f"{key} requires a value", len(text))
        if len(args) > 1:
            raise ExtraArgumentError("unexpected extra argument", args[1][1])
        tok, off = args[0]
        value = _parse_number(tok, off)
        if key == "FREQ":
            _check_frequency(value, off)
            return SignalCommand.set_frequency(value)
        _check_voltage(value, off)
        return SignalCommand.set_voltage(value)
    if key == "OUTP":
        if not args:
            raise MissingArgumentError("OUTP requires ON or OFF", len(text))
        if len(args) > 1:
            raise ExtraArgumentError("unexpected extra argument", args[1][1])
        tok, off = args[0]
        state = tok.upper()
        if state == "ON":
            return SignalCommand(CommandKind.OUTPUT_ON)
        if state == "OFF":
            return SignalCommand(CommandKind.OUTPUT_OFF)
        raise UnknownKeywordError(f"OUTP expects ON or OFF, got {tok!r}", off)
    if key == "STAT?":
        if args:
            raise ExtraArgumentError("STAT? takes no argument", args[0][1])
        return SignalCommand(CommandKind.QUERY_STATE)
    raise UnknownKeywordError(f"unknown keyword {kw!r}", kw_off)


def parse_stream(data: bytes) -> list[SignalCommand]:
    """Split a byte stream on newlines and parse each complete line."""
    commands = []
    for raw in data.split(b"\n"):
        if raw.strip(b" \t\r"):
            commands.append(parse(raw + b"\n"))
    return commands


@dataclass(frozen=True)
class GeneratorState:
    frequency: float = 1e3
    voltage: float = 1.0
    output_enabled: bool = False


def format_state(state: GeneratorState) -> bytes:
    outp = "ON" if state.output_enabled else "OFF"
    return f"FREQ {format_number(state.frequency)};VOLT {format_number(state.voltage)};OUTP {outp}\n".encode(
        "ascii"
    )


def apply(state: GeneratorState, command: SignalCommand) -> tuple[GeneratorState, bytes | None]:
    kind = command.kind
    if kind is CommandKind.SET_FREQUENCY:
        return replace(state, frequency=command.frequency), None
    if kind is CommandKind.SET_VOLTAGE:
        return replace(state, voltage=command.voltage), None
    if kind is CommandKind.OUTPUT_ON:
        return replace(state, output_enabled=True), None
    if kind is CommandKind.OUTPUT_OFF:
        return replace(state, output_enabled=False), None
    return state, format_state(state)


class SimulatedGenerator:
    """In-process instrument fed with raw command bytes, as a real one would be."""

    def __init__(self, state: GeneratorState | None = None):
        self._state = state or GeneratorState()
        self.transcript: list[bytes] = []

    @property
    def state(self) -> GeneratorState:
        return self._state

    def write(self, data: bytes) -> list[bytes]:
        replies = []
        for cmd in parse_stream(data):
            self.transcript.append(serialize(cmd))
            self._state, reply = apply(self._state, cmd)
            if reply is not None:
                replies.append(reply)
        return replies

    def send(self, command: SignalCommand) -> bytes | None:
        replies = self.write(serialize(command))
        return replies[0] if replies else None
