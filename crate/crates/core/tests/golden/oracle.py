#!/usr/bin/env python3
"""Recomputes the golden vectors in this directory from first principles.

Puzzles use plain modular arithmetic in the order-23 subgroup of Z_47^*
(generator 2). Frames are assembled field by field from the byte layout:
magic, version, type, session id, u32 BE payload length, payload; payload
integers are big endian, strings and byte strings carry a u32 length, lists
a u32 count.

Run from this directory: python3 oracle.py
"""

import struct

P, Q, G = 47, 23, 2


def inv_q(a):
    return next(b for b in range(1, Q) if a * b % Q == 1)


def elems(*residues):
    return b"".join(struct.pack(">Q", r) for r in residues)


def ur_gen(y, m, r0, r1):
    return (m * pow(y, r0, P) % P, pow(G, r0, P), pow(y, r1, P), pow(G, r1, P))


def ur_rerand(z, r0, r1):
    a0, b0, a1, b1 = z
    return (a0 * pow(a1, r0, P) % P, b0 * pow(b1, r0, P) % P, pow(a1, r1, P), pow(b1, r1, P))


def bm_gen(m, r):
    return (pow(G, r * inv_q(m) % Q, P), pow(G, r, P))


def bm_rerand(z, r):
    return (pow(z[0], r, P), pow(z[1], r, P))


UR, BM, TOY = b"\x02", b"\x01", b"\x00"


def puzzles():
    x = 5
    y = pow(G, x, P)
    z = ur_gen(y, 4, 3, 7)
    zz = ur_rerand(z, 2, 3)
    w = bm_gen(4, 7)
    ww = bm_rerand(w, 3)
    return [
        ("ur-params-x5", UR + TOY + elems(y)),
        ("ur-trapdoor-x5", UR + TOY + struct.pack(">Q", x)),
        ("ur-gen-m4-r3-r7", UR + TOY + elems(*z)),
        ("ur-rerandomize-r2-r3", UR + TOY + elems(*zz)),
        ("bilinear-params", BM + TOY + elems(G, G)),
        ("bilinear-gen-m4-r7", BM + TOY + elems(*w)),
        ("bilinear-rerandomize-r3", BM + TOY + elems(*ww)),
    ]


def u8(v):
    return bytes([v])


def u32(v):
    return struct.pack(">I", v)


def u64(v):
    return struct.pack(">Q", v)


def blob(b):
    return u32(len(b)) + b


def text(s):
    return blob(s.encode())


def lst(items):
    return u32(len(items)) + b"".join(blob(i) for i in items)


KEY = bytes(range(32))
SID = bytes(range(0xA0, 0xB0))


def frame(code, payload):
    return b"SA2F" + u8(1) + u8(code) + SID + u32(len(payload)) + payload


def frames():
    return [
        ("sp-register", frame(1, text("sp1") + text("s1") + blob(KEY) + blob(b"\x01\x02") + blob(b"\x03"))),
        ("es-register-request", frame(2, text("e1") + blob(b"reg") + text("s1"))),
        ("es-credentials", frame(3, u8(0) + text("s1") + blob(KEY) + blob(b"\xaa") + text("echo") + blob(b"\x02\x00") + blob(b""))),
        ("es-puzzle-register", frame(4, text("e3") + u32(2) + blob(b"\x02\x00\xff"))),
        ("token-request", frame(5, text("s2") + blob(b"\x10") + blob(b"\x20\x21") + blob(b"pay"))),
        ("token-issue", frame(6, u8(0) + blob(b"\x11") + blob(b"\x22") + blob(KEY) + blob(b"\x33") + blob(b"\x44") + blob(b"\x55"))),
        ("offload-init", frame(7, blob(b"tok"))),
        ("puzzle-list", frame(8, u64(0x0102030405060708) + lst([b"\x01", b"", b"\x02\x03"]))),
        ("offload-request", frame(9, blob(b"tok") + blob(b"\x02\x00") + blob(b"ct"))),
        ("user-abort", frame(10, b"")),
        ("forward-to-es", frame(11, blob(b"tok") + blob(b"ct"))),
        ("es-response", frame(12, blob(b"resp"))),
        ("response-to-user", frame(13, blob(b"resp"))),
        ("claim-bs", frame(14, text("bs") + blob(b"tok"))),
        ("claim-es", frame(15, text("e1") + text("s2") + blob(b"tok"))),
        ("claim-result", frame(16, u8(0) + u64(8))),
        ("ack", frame(17, u8(15) + blob(b"dup"))),
        ("reject", frame(18, u8(4) + text("puzzle replay"))),
    ]


def write(path, header, rows):
    with open(path, "w") as f:
        f.write(header)
        for name, data in rows:
            f.write(f"{name} {data.hex()}\n")


if __name__ == "__main__":
    write("toy_puzzles.hex", "# name hex; order-23 subgroup of Z_47^*, generator 2\n", puzzles())
    write("frames.hex", "# name hex; session id a0..af, 32-byte key 00..1f\n", frames())
