#!/usr/bin/env python3
"""
kesten-groupoides: operadores de Markov invariantes sobre grupoides finitos p.m.p.

Uso: ``python3 kestenGroupoides.py <validate|norm|radius|kesten|walk|reproduce|selftest> ...``
"""
import os
import sys

# src/ contiene los paquetes core, checks y utils
current_dir = os.path.dirname(os.path.abspath(__file__))
src_dir = os.path.join(current_dir, 'src')
if src_dir not in sys.path:
    sys.path.insert(0, src_dir)

from src.main import main

if __name__ == "__main__":
    sys.exit(main())
