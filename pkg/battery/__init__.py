"""Dicke quantum battery: dissipative charging, steady-state ergotropy and
superradiant discharge of N two-level atoms in the symmetric subspace.

Submodules are imported explicitly by callers (``from battery import model``)
so that importing the package stays cheap.
"""
