#pragma once

#include <stdexcept>
#include <string>

namespace retstack {

struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : PipelineError {
    using PipelineError::PipelineError;
};

struct MissingColumn : ValidationError {
    explicit MissingColumn(const std::string& col)
        : ValidationError("missing column: " + col) {}
};

struct DuplicateSampleId : ValidationError {
    explicit DuplicateSampleId(const std::string& id)
        : ValidationError("duplicate sample_id: " + id) {}
};

struct OutOfRangeValue : ValidationError {
    OutOfRangeValue(std::size_t row, const std::string& label, long long value)
        : ValidationError("out-of-range value " + std::to_string(value) + " for label '" +
                          label + "' at row " + std::to_string(row)) {}
};

struct ParseError : ValidationError {
    ParseError(std::size_t line, const std::string& what)
        : ValidationError("parse error at line " + std::to_string(line) + ": " + what) {}
    explicit ParseError(const std::string& what) : ValidationError("parse error: " + what) {}
};

struct DegenerateInput : PipelineError {
    using PipelineError::PipelineError;
};

struct FoldOutOfRange : PipelineError {
    FoldOutOfRange(int fold, int k)
        : PipelineError("fold " + std::to_string(fold) + " out of range [0, " +
                        std::to_string(k) + ")") {}
};

struct DegenerateClass : PipelineError {
    using PipelineError::PipelineError;
};

struct LengthMismatch : PipelineError {
    using PipelineError::PipelineError;
};

struct ShapeMismatch : PipelineError {
    using PipelineError::PipelineError;
};

struct DimensionMismatch : PipelineError {
    using PipelineError::PipelineError;
};

struct NonFiniteLoss : PipelineError {
    using PipelineError::PipelineError;
};

struct MissingFoldPrediction : PipelineError {
    MissingFoldPrediction(const std::string& model_id, int fold)
        : PipelineError("missing prediction for model '" + model_id + "' fold " +
                        std::to_string(fold)) {}
};

struct CoverageGap : PipelineError {
    explicit CoverageGap(const std::string& sample_id)
        : PipelineError("no out-of-fold prediction covers sample '" + sample_id + "'") {}
};

struct LeakageDetected : PipelineError {
    LeakageDetected(const std::string& sample_id, const std::string& model_id)
        : PipelineError("prediction for sample '" + sample_id + "' from model '" + model_id +
                        "' covers a sample outside its validation fold") {}
};

struct DegenerateTarget : PipelineError {
    using PipelineError::PipelineError;
};

struct EmptyForest : PipelineError {
    using PipelineError::PipelineError;
};

struct UnknownSourceLabel : PipelineError {
    explicit UnknownSourceLabel(const std::string& name)
        : PipelineError("unknown source label: " + name) {}
};

struct UnknownTargetLabel : PipelineError {
    explicit UnknownTargetLabel(const std::string& name)
        : PipelineError("unknown target label: " + name) {}
};

struct EmptyMapping : PipelineError {
    using PipelineError::PipelineError;
};

struct EmptyWindow : PipelineError {
    using PipelineError::PipelineError;
};

struct AllTrialsPruned : PipelineError {
    using PipelineError::PipelineError;
};

struct InvalidSpec : ValidationError {
    using ValidationError::ValidationError;
};

struct IncompleteRun : PipelineError {
    using PipelineError::PipelineError;
};

}  // namespace retstack
