"""Exception hierarchy.

Two families matter to callers: :class:`MathematicalViolation` means the input
is well formed but fails a hypothesis (the CLI exits 1), :class:`InputError`
means the input could not be read as an instance at all (the CLI exits 2).
"""


class SmodcertError(Exception):
    pass


class MathematicalViolation(SmodcertError):
    """The instance is well formed but violates a mathematical hypothesis."""

    def details(self):
        return {}


class InputError(SmodcertError):
    """Malformed input: parse, schema or shape problems."""

    def __init__(self, location, message):
        super().__init__(f"{location}: {message}")
        self.location = location
        self.message = message


class ParseError(InputError):
    pass


class SchemaError(InputError):
    pass


class ShapeError(InputError):
    pass


class NonSquare(ValueError, SmodcertError):
    pass


class DimensionMismatch(ValueError, SmodcertError):
    pass


class AlgebraMismatch(ValueError, SmodcertError):
    pass


class SizeCapExceeded(ValueError, SmodcertError):
    pass


class MultiBlockUnsupported(ValueError, SmodcertError):
    pass


class NonHermitian(MathematicalViolation):
    def __init__(self, residual):
        super().__init__(f"matrix is not Hermitian (residual {residual:.3e})")
        self.residual = float(residual)

    def details(self):
        return {"hermiticity_residual": self.residual}


class NonHermitianKernel(MathematicalViolation):
    def __init__(self, residual):
        super().__init__(f"kernel is not Hermitian (residual {residual:.3e})")
        self.residual = float(residual)

    def details(self):
        return {"hermiticity_residual": self.residual}


class NotPSD(MathematicalViolation):
    def __init__(self, min_eig, scale):
        super().__init__(f"Gram matrix is not positive semidefinite (min eig {min_eig:.3e}, scale {scale:.3e})")
        self.min_eig = float(min_eig)
        self.scale = float(scale)

    def details(self):
        return {"gram_min_eig": self.min_eig, "scale": self.scale}


class InnerProductEscapesAlgebra(MathematicalViolation):
    def __init__(self, pair, mass):
        super().__init__(f"inner product of basis pair {pair} leaves the algebra (off-block mass {mass:.3e})")
        self.pair = tuple(pair)
        self.mass = float(mass)

    def details(self):
        return {"off_block_mass": self.mass}


class NotAdjointable(MathematicalViolation):
    def __init__(self, residual):
        super().__init__(f"operator is not adjointable between the modules (residual {residual:.3e})")
        self.residual = float(residual)

    def details(self):
        return {"adjointability_residual": self.residual}


class NotAlphaCp(MathematicalViolation):
    def __init__(self, certificate):
        super().__init__("map is not alpha-completely positive")
        self.certificate = certificate

    def details(self):
        return dict(self.certificate.residual_table())


class NotAlphaCpd(MathematicalViolation):
    def __init__(self, certificate):
        super().__init__("kernel is not alpha-CPD")
        self.certificate = certificate

    def details(self):
        return dict(self.certificate.residual_table())


class NotTauMap(MathematicalViolation):
    def __init__(self, residual):
        super().__init__(f"T is not a tau-map (residual {residual:.3e})")
        self.residual = float(residual)

    def details(self):
        return {"tau_map_residual": self.residual}


class U2NotIdentity(MathematicalViolation):
    def __init__(self, residual):
        super().__init__(f"the unitary on E2 is not the identity (residual {residual:.3e})")
        self.residual = float(residual)

    def details(self):
        return {"u2_identity_residual": self.residual}


class AlphaNotIdentity(MathematicalViolation):
    def __init__(self, residual):
        super().__init__(f"automorphism is not the identity (residual {residual:.3e})")
        self.residual = float(residual)

    def details(self):
        return {"alpha_identity_residual": self.residual}


class IllDefinedQuotientMap(MathematicalViolation):
    def __init__(self, which, residual):
        super().__init__(f"{which} does not descend to the quotient (fit residual {residual:.3e})")
        self.which = which
        self.residual = float(residual)

    def details(self):
        return {f"fit_residual[{self.which}]": self.residual}
