"""Physical constants (CODATA 2018 exact/recommended values)."""

SPEED_OF_LIGHT = 2.99792458e8  # m/s
PLANCK = 6.62607015e-34  # J s
BOLTZMANN = 1.380649e-23  # J/K
AVOGADRO = 6.02214076e23  # 1/mol
GAS_CONSTANT = 8.314462618  # J/(mol K)
ATM = 101325.0  # Pa
FREE_SPACE_IMPEDANCE = 377.0  # ohm
