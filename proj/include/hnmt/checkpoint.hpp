#pragma once

#include <string>

#include "hnmt/model.hpp"

namespace hnmt {

// `hnmt-ckpt v1` format: ASCII magic+version line; UTF-8 `key=value` config
// block terminated by a blank line (vocabularies embedded as space-joined
// token lists, LSTM gate order documented as i,f,g,o); then one record per
// tensor: length-prefixed name, rank, dims and row-major data, all 64-bit
// little-endian (IEEE-754 for values). Round-trips are bit-exact.
void save_checkpoint(const HybridModel& model, const std::string& path);
HybridModel load_checkpoint(const std::string& path);

}  // namespace hnmt
