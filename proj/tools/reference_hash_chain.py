#!/usr/bin/env python3
"""Reference mock-docking score chain.

Prints the score table for task ids 0..N-1 (default 10) as C++ initializer rows.
tests/test_mock_dock.cpp freezes the output of this script.
"""
import argparse

MASK = (1 << 64) - 1
SEED_SALT = 0x6D6F636B_646F636B
CHAIN_CONSTANT = 0xD1B54A32_D192ED03
ROUNDS = 64


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def score(task_id):
    h = splitmix64((task_id ^ SEED_SALT) & MASK)
    for _ in range(ROUNDS):
        h = splitmix64(h ^ CHAIN_CONSTANT)
    return h


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("-n", type=int, default=10)
    args = ap.parse_args()
    for t in range(args.n):
        print(f"    {{{t}u, 0x{score(t):016x}ULL}},")


if __name__ == "__main__":
    main()
