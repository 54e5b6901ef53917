"""Multiparty session π-calculus workbench."""
