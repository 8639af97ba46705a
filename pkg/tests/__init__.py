"""Tests for Viterbi SpecDec."""
