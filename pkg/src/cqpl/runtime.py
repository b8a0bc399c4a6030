"""Multi-module execution: per-pair FIFO channels, a cooperative scheduler
with statement granularity, and global deadlock detection.

The scheduler is logically concurrent but physically single-threaded:
deterministic round-robin by default, seed-controlled random interleaving on
request. Channels are unbounded, so sends never block; only receives do.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import ast
from .errors import E_DEADLOCK, RuntimeFailure
from .interp import (BLOCKED_ON_RECEIVE, FAILED, FINISHED, Message,
                     ModuleInterp, OutputSink)
from .qstate import DEFAULT_QHEAP, DEFAULT_SIM_CAP, QuantumState
from .typecheck import CheckedProgram


class Channel:
    """FIFO of typed messages for one ordered module pair.

    Heap indices of queued quantum messages are owned by the channel while
    in flight: the sender deleted its binding and the receiver has not yet
    adopted them.
    """

    def __init__(self, origin: str, dest: str):
        self.origin = origin
        self.dest = dest
        self.fifo: deque[Message] = deque()

    def push(self, message: Message):
        self.fifo.append(message)

    def pop(self, count: int) -> list[Message]:
        return [self.fifo.popleft() for _ in range(count)]

    def size(self) -> int:
        return len(self.fifo)

    def queued_indices(self) -> list[int]:
        out = []
        for msg in self.fifo:
            if msg.is_quantum:
                out.extend(msg.indices)
        return out

    def __repr__(self):
        return f"Channel({self.origin}->{self.dest}, {len(self.fifo)} queued)"


class ChannelTable:
    """Lazily created channels for every ordered module pair."""

    def __init__(self):
        self.channels: dict[tuple[str, str], Channel] = {}

    def get(self, origin: str, dest: str) -> Channel:
        key = (origin, dest)
        if key not in self.channels:
            self.channels[key] = Channel(origin, dest)
        return self.channels[key]

    def all_queued_indices(self) -> list[int]:
        out = []
        for channel in self.channels.values():
            out.extend(channel.queued_indices())
        return out


@dataclass
class RunResult:
    statuses: dict[str, str]
    output: list[str]
    failure: RuntimeFailure | None = None
    deadlocked: list[tuple[str, tuple[str, str]]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failure is None and not self.deadlocked

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 2


class Scheduler:
    def __init__(self, program: ast.Program, *, seed: int = 0,
                 qheap: int = DEFAULT_QHEAP, sim_cap: int = DEFAULT_SIM_CAP,
                 interleave: str = "roundrobin", trace: bool = False,
                 recursion_limit: int | None = None, stream=None,
                 max_steps: int | None = None, check_ownership: bool = True,
                 qstate: QuantumState | None = None):
        self.rng = np.random.default_rng(seed)
        self.qstate = qstate if qstate is not None else \
            QuantumState(qheap=qheap, sim_cap=sim_cap)
        self.sink = OutputSink(stream=stream, trace=trace)
        self.channels = ChannelTable()
        self.interleave = interleave
        self.max_steps = max_steps
        self.check_ownership = check_ownership
        limit = recursion_limit if recursion_limit is not None else 4096
        if program.is_module_form:
            specs = [(m.name, m.body) for m in program.modules]
        else:
            specs = [("main", program.stmts)]
        self.modules = [
            ModuleInterp(name, body, self.qstate, self.rng, self.sink,
                         channels=self.channels, recursion_limit=limit)
            for name, body in specs
        ]

    def _assert_unique_ownership(self):
        seen: set[int] = set()
        owners = [(m.name, m.owned_indices()) for m in self.modules]
        owners.append(("<channels>", self.channels.all_queued_indices()))
        for owner, indices in owners:
            for idx in indices:
                assert idx not in seen, \
                    f"heap index {idx} owned twice (last owner {owner})"
                seen.add(idx)

    def run(self) -> RunResult:
        steps = 0
        while True:
            active = [m for m in self.modules if m.status not in (FINISHED, FAILED)]
            if not active:
                break
            order = list(active)
            if self.interleave == "random":
                self.rng.shuffle(order)
            progressed = False
            for module in order:
                if module.status in (FINISHED, FAILED):
                    continue
                if module.step():
                    progressed = True
                    if self.check_ownership:
                        self._assert_unique_ownership()
                if module.status == FAILED:
                    break
                steps += 1
                if self.max_steps is not None and steps >= self.max_steps:
                    break
            failed = next((m for m in self.modules if m.status == FAILED), None)
            if failed is not None:
                self.sink.flush()
                return RunResult(self._statuses(), self.sink.lines,
                                 failure=failed.failure)
            if self.max_steps is not None and steps >= self.max_steps:
                break
            if not progressed:
                # every unfinished module is blocked on a receive: deadlock
                blocked = [(m.name, m.blocked_channel) for m in self.modules
                           if m.status == BLOCKED_ON_RECEIVE]
                self.sink.flush()
                return RunResult(self._statuses(), self.sink.lines,
                                 deadlocked=blocked)
        self.sink.flush()
        return RunResult(self._statuses(), self.sink.lines)

    def _statuses(self) -> dict[str, str]:
        return {m.name: m.status for m in self.modules}


def run_program(checked: CheckedProgram | ast.Program, *, seed: int = 0,
                qheap: int = DEFAULT_QHEAP, sim_cap: int = DEFAULT_SIM_CAP,
                interleave: str = "roundrobin", trace: bool = False,
                recursion_limit: int | None = None, stream=None,
                max_steps: int | None = None, check_ownership: bool = True,
                qstate: QuantumState | None = None) -> RunResult:
    """Execute a type-checked program and collect its output."""
    program = checked.program if isinstance(checked, CheckedProgram) else checked
    scheduler = Scheduler(program, seed=seed, qheap=qheap, sim_cap=sim_cap,
                          interleave=interleave, trace=trace,
                          recursion_limit=recursion_limit, stream=stream,
                          max_steps=max_steps, check_ownership=check_ownership,
                          qstate=qstate)
    return scheduler.run()


def deadlock_message(result: RunResult) -> str:
    parts = []
    for name, channel in result.deadlocked:
        if channel is not None:
            parts.append(f"module {name} waiting on channel "
                         f"{channel[0]}->{channel[1]}")
        else:
            parts.append(f"module {name} blocked")
    return f"error[{E_DEADLOCK}]: deadlock: " + "; ".join(parts)
