#pragma once

// JSON forms of chain output. Field order is fixed so that two runs with
// the same inputs produce byte-identical files.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "coa/chain.hpp"
#include "coa/domain.hpp"

namespace coa {

using ojson = nlohmann::ordered_json;

ojson to_json(const LabelSet& labels);
LabelSet labelset_from_json(const ojson& j);

ojson to_json(const Interaction& it);
Interaction interaction_from_json(const ojson& j);

ojson to_json(const ChainState& state);
// Throws InputError on malformed input.
ChainState chain_state_from_json(const ojson& j);

ojson to_json(const ChainFailure& failure);

// One ChainState per line.
void write_transcripts(const std::filesystem::path& path, const std::vector<ChainState>& states);
std::vector<ChainState> read_transcripts(const std::filesystem::path& path);

}  // namespace coa
