"""Nonisothermal Navier-Stokes-Fokker-Planck simulator with thermodynamic audits."""
