#pragma once

#include <stdexcept>
#include <string>

namespace toolforge {

// Every failure the pipeline can surface derives from Error. Stages catch
// the specific types they know how to recover from (drop a spec, reject a
// candidate edge, abort one trajectory) and let the rest propagate.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define TOOLFORGE_DEFINE_ERROR(Name)          \
    class Name : public Error {               \
    public:                                   \
        using Error::Error;                   \
    }

// spec_model
TOOLFORGE_DEFINE_ERROR(ParseFailure);
TOOLFORGE_DEFINE_ERROR(SchemaMismatch);
TOOLFORGE_DEFINE_ERROR(CompletionFailed);

// llm_gateway
TOOLFORGE_DEFINE_ERROR(TransportError);
TOOLFORGE_DEFINE_ERROR(RateLimited);
TOOLFORGE_DEFINE_ERROR(BadRequest);
TOOLFORGE_DEFINE_ERROR(DimensionMismatch);
TOOLFORGE_DEFINE_ERROR(UnscriptedPrompt);

// embedder
TOOLFORGE_DEFINE_ERROR(MissingField);

// fn_graph
TOOLFORGE_DEFINE_ERROR(MissingEmbedding);
TOOLFORGE_DEFINE_ERROR(JudgeFormatError);
TOOLFORGE_DEFINE_ERROR(NoEdges);

// synthesis
TOOLFORGE_DEFINE_ERROR(IntentFormatError);
TOOLFORGE_DEFINE_ERROR(MalformedToolCall);
TOOLFORGE_DEFINE_ERROR(ToolFormatError);

// quality
TOOLFORGE_DEFINE_ERROR(VerdictFormatError);

// sampler
TOOLFORGE_DEFINE_ERROR(SerializationError);
TOOLFORGE_DEFINE_ERROR(ManifestMismatch);

// pipeline
TOOLFORGE_DEFINE_ERROR(ConfigError);
TOOLFORGE_DEFINE_ERROR(StageInputMissing);
TOOLFORGE_DEFINE_ERROR(ConfigHashMismatch);

#undef TOOLFORGE_DEFINE_ERROR

} // namespace toolforge
