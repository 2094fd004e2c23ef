#pragma once

#include <stdexcept>
#include <string>

namespace facetrain {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define FACETRAIN_DEFINE_ERROR(Name)                                        \
    struct Name : Error {                                                   \
        explicit Name(const std::string& what) : Error(what) {}             \
    }

FACETRAIN_DEFINE_ERROR(ZeroRow);
FACETRAIN_DEFINE_ERROR(DimMismatch);
FACETRAIN_DEFINE_ERROR(LabelOutOfRange);
FACETRAIN_DEFINE_ERROR(InvalidShardCount);
FACETRAIN_DEFINE_ERROR(InvalidRatio);
FACETRAIN_DEFINE_ERROR(PlanMismatch);
FACETRAIN_DEFINE_ERROR(StaleState);
FACETRAIN_DEFINE_ERROR(Overflow);
FACETRAIN_DEFINE_ERROR(EmptyClass);
FACETRAIN_DEFINE_ERROR(DegenerateCenter);
FACETRAIN_DEFINE_ERROR(AllRemoved);
FACETRAIN_DEFINE_ERROR(TruthMismatch);
FACETRAIN_DEFINE_ERROR(TableMiss);
FACETRAIN_DEFINE_ERROR(NonPositiveCost);
FACETRAIN_DEFINE_ERROR(EmptySpace);
FACETRAIN_DEFINE_ERROR(InvalidSpec);
FACETRAIN_DEFINE_ERROR(EpochOutOfRange);
FACETRAIN_DEFINE_ERROR(DegeneratePairs);
FACETRAIN_DEFINE_ERROR(NonFiniteLoss);
FACETRAIN_DEFINE_ERROR(BadMagic);
FACETRAIN_DEFINE_ERROR(BadCrc);
FACETRAIN_DEFINE_ERROR(Truncated);
FACETRAIN_DEFINE_ERROR(VersionUnsupported);
FACETRAIN_DEFINE_ERROR(ConfigError);

#undef FACETRAIN_DEFINE_ERROR

}  // namespace facetrain
