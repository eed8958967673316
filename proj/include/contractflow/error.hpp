#pragma once

#include <stdexcept>
#include <string>

namespace contractflow {

// Base for every error raised by the library. `code()` is a stable name
// used in logs, transcripts and CLI diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define CONTRACTFLOW_ERROR(Name)                                  \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  }

// core
CONTRACTFLOW_ERROR(InvalidValue);
CONTRACTFLOW_ERROR(InvalidTask);
CONTRACTFLOW_ERROR(InvalidPlan);
CONTRACTFLOW_ERROR(CyclicPlan);
CONTRACTFLOW_ERROR(ParseError);

// retrieval
CONTRACTFLOW_ERROR(EmptyCorpus);
CONTRACTFLOW_ERROR(EmbedderFailure);
CONTRACTFLOW_ERROR(DimensionMismatch);

// providers
CONTRACTFLOW_ERROR(BackendUnavailable);
CONTRACTFLOW_ERROR(ScriptExhausted);
CONTRACTFLOW_ERROR(MatcherMismatch);
CONTRACTFLOW_ERROR(ConfigError);

// planning
CONTRACTFLOW_ERROR(NoValidCandidate);
CONTRACTFLOW_ERROR(EditRejected);

// tool hub
CONTRACTFLOW_ERROR(DuplicateId);
CONTRACTFLOW_ERROR(MalformedCard);
CONTRACTFLOW_ERROR(EmptyHub);
CONTRACTFLOW_ERROR(UnknownTool);
CONTRACTFLOW_ERROR(MissingGold);

// negotiation / execution
CONTRACTFLOW_ERROR(NoCandidates);
CONTRACTFLOW_ERROR(ProtocolError);
CONTRACTFLOW_ERROR(UnbindableInput);
CONTRACTFLOW_ERROR(ContractRejected);
CONTRACTFLOW_ERROR(ExecutionError);
CONTRACTFLOW_ERROR(OrphanClaim);

// tool maker
CONTRACTFLOW_ERROR(UnsynthesizableCriterion);
CONTRACTFLOW_ERROR(GenerationRefused);
CONTRACTFLOW_ERROR(SandboxViolation);

#undef CONTRACTFLOW_ERROR

}  // namespace contractflow
