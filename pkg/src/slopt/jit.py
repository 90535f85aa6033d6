"""Executable code buffers: place encoded machine code in memory and call it
through the (out-pointer, input-pointers...) System V signature.

W^X is observed: pages are written while RW, then flipped to RX with
mprotect before the first call. An optional escape hatch pipes Intel-syntax
text through a system assembler; it exists for differential testing of the
in-repo encoder, never for the optimization hot loop.
"""

from __future__ import annotations

import ctypes
import mmap
import os
import platform
import subprocess
import tempfile

from .errors import MapError, PlatformUnsupportedError

PROT_READ, PROT_WRITE, PROT_EXEC, PROT_NONE = 0x1, 0x2, 0x4, 0x0

_libc = ctypes.CDLL(None, use_errno=True)
_libc.mprotect.argtypes = [ctypes.c_void_p, ctypes.c_size_t, ctypes.c_int]
_libc.mprotect.restype = ctypes.c_int

PAGE = mmap.PAGESIZE


def cpu_features() -> frozenset:
    """CPU feature flags relevant to the template catalog (adx, bmi2)."""
    if platform.machine() != "x86_64":
        return frozenset()
    try:
        with open("/proc/cpuinfo") as f:
            for line in f:
                if line.startswith("flags"):
                    flags = set(line.split(":", 1)[1].split())
                    return frozenset({"adx", "bmi2"} & flags)
    except OSError:
        pass
    return frozenset()


def host_executable() -> bool:
    return platform.machine() == "x86_64" and os.name == "posix"


def require_host(needed_features=()) -> None:
    if not host_executable():
        raise PlatformUnsupportedError(
            f"host is {platform.machine()}, need x86-64 to execute generated code"
        )
    missing = set(needed_features) - cpu_features()
    if missing:
        raise PlatformUnsupportedError(f"CPU lacks required features: {sorted(missing)}")


class CodeBuffer:
    """Machine code in an executable page; immutable once sealed."""

    def __init__(self, code: bytes):
        require_host()
        size = max(PAGE, (len(code) + PAGE - 1) // PAGE * PAGE)
        try:
            self._map = mmap.mmap(-1, size, prot=PROT_READ | PROT_WRITE)
        except OSError as e:
            raise MapError(f"mmap failed: {e}") from None
        self._map.write(code)
        self._keep = ctypes.c_char.from_buffer(self._map)
        self.address = ctypes.addressof(self._keep)
        self.length = len(code)
        if _libc.mprotect(self.address, size, PROT_READ | PROT_EXEC) != 0:
            raise MapError(f"mprotect failed: errno {ctypes.get_errno()}")
        self.executable = True

    def callable(self, nargs: int):
        """ctypes callable taking ``nargs`` raw pointers (out first)."""
        proto = ctypes.CFUNCTYPE(None, *([ctypes.c_void_p] * nargs))
        return proto(self.address)

    def raw_callable(self, restype, *argtypes):
        return ctypes.CFUNCTYPE(restype, *argtypes)(self.address)


def load_executable(code: bytes) -> CodeBuffer:
    return CodeBuffer(code)


class FunctionRunner:
    """Convenience wrapper calling generated code with Python-level inputs.

    Arguments mirror the interpreter: a list per array argument, an int for
    a scalar. Returns the tuple of output slots.
    """

    def __init__(self, code: bytes, spec):
        self.spec = spec
        self.buffer = CodeBuffer(code)
        self.n_out = max(1, len(spec.returns))
        self._out = (ctypes.c_uint64 * self.n_out)()
        self._arrays = []
        for arg in spec.args:
            if arg.is_array:
                self._arrays.append((ctypes.c_uint64 * arg.length)())
            else:
                self._arrays.append(None)
        self._fn = self.buffer.callable(1 + len(spec.args))

    def __call__(self, inputs) -> tuple:
        ptrs = [ctypes.addressof(self._out)]
        for arg, buf, value in zip(self.spec.args, self._arrays, inputs):
            if arg.is_array:
                for i, v in enumerate(value):
                    buf[i] = v
                ptrs.append(ctypes.addressof(buf))
            else:
                ptrs.append(value)  # scalar passed by value in its register
        self._fn(*ptrs)
        return tuple(self._out[i] for i in range(len(self.spec.returns)))


def guarded_array(n_elems: int):
    """A ctypes uint64 array ending flush against a PROT_NONE guard page.

    Any store past the end of the array faults immediately; used by tests to
    show generated code stays inside its output buffer.
    """
    nbytes = n_elems * 8
    pages = (nbytes + PAGE - 1) // PAGE + 1
    m = mmap.mmap(-1, (pages + 1) * PAGE, prot=PROT_READ | PROT_WRITE)
    keep = ctypes.c_char.from_buffer(m)
    base = ctypes.addressof(keep)
    guard = base + pages * PAGE
    if _libc.mprotect(guard, PAGE, PROT_NONE) != 0:
        raise MapError(f"mprotect(PROT_NONE) failed: errno {ctypes.get_errno()}")
    start = guard - nbytes
    arr = (ctypes.c_uint64 * n_elems).from_address(start)
    arr._slopt_keepalive = (m, keep)
    return arr


def assemble_external(text: str, assembler: str = "as") -> bytes:
    """Assemble Intel-syntax text with a system assembler; returns raw bytes."""
    with tempfile.TemporaryDirectory() as d:
        src = os.path.join(d, "f.s")
        obj = os.path.join(d, "f.o")
        binout = os.path.join(d, "f.bin")
        with open(src, "w") as f:
            f.write(".intel_syntax noprefix\n")
            f.write(text)
            f.write("\n")
        subprocess.run([assembler, "-o", obj, src], check=True, capture_output=True)
        subprocess.run(
            ["objcopy", "-O", "binary", "-j", ".text", obj, binout],
            check=True,
            capture_output=True,
        )
        with open(binout, "rb") as f:
            return f.read()
