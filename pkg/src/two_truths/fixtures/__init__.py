"""Packaged SBM fixtures, loaded with two_truths.core.sbm.load_fixture"""
