"""Functional ANOVA decomposition of networks trained through their mixed partial."""
