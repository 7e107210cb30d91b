"""Exception types raised across the pipeline.

Every error derives from :class:`PipelineError` so the CLI can turn any of
them into a structured JSON error object with a stable ``code``.
"""


class PipelineError(ValueError):
    code = "PipelineError"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class InvalidConfig(PipelineError):
    code = "InvalidConfig"


class MalformedRecord(PipelineError):
    code = "MalformedRecord"

    def __init__(self, field, patient_id=None, detail=""):
        self.field = field
        self.patient_id = patient_id
        where = f"patient {patient_id!r}" if patient_id is not None else "cohort"
        msg = f"{where}: bad field {field!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)

    def to_dict(self):
        d = super().to_dict()
        d.update(field=self.field, patient_id=self.patient_id)
        return d


class TooFewSamples(PipelineError):
    code = "TooFewSamples"


class EmptyTumor(PipelineError):
    code = "EmptyTumor"


class EmptyList(PipelineError):
    code = "EmptyList"


class NonPositiveBaseline(PipelineError):
    code = "NonPositiveBaseline"


class MissingMeasurements(PipelineError):
    code = "MissingMeasurements"


class MissingVolume(PipelineError):
    code = "MissingVolume"


class DivergedLoss(PipelineError):
    code = "DivergedLoss"


class DimMismatch(PipelineError):
    code = "DimMismatch"


class LengthMismatch(PipelineError):
    code = "LengthMismatch"


class MissingFeatureVector(PipelineError):
    code = "MissingFeatureVector"


class UnknownAttribute(PipelineError):
    code = "UnknownAttribute"


class AsymmetricInput(PipelineError):
    code = "AsymmetricInput"


class NegativeWeight(PipelineError):
    code = "NegativeWeight"


class ShapeMismatch(PipelineError):
    code = "ShapeMismatch"


class NonFiniteInput(PipelineError):
    code = "NonFiniteInput"


class EmptyMask(PipelineError):
    code = "EmptyMask"


class StaleTrace(PipelineError):
    code = "StaleTrace"


class InvalidSampleCount(PipelineError):
    code = "InvalidSampleCount"


class EmptyPredictions(PipelineError):
    code = "EmptyPredictions"


class SingleClass(PipelineError):
    code = "SingleClass"


class DegenerateData(PipelineError):
    code = "DegenerateData"
