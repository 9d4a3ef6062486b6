"""Shared numerical helpers for VBSR-BENCH"""
