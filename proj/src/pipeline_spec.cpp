#include "minipipe/pipeline_spec.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "minipipe/error.hpp"

namespace minipipe {

namespace {

struct OperatorName {
  OperatorKind op;
  std::string_view name;
};

constexpr OperatorName kOperatorNames[] = {
    {OperatorKind::kNeg2Zero, "neg2zero"},  {OperatorKind::kLogarithm, "logarithm"},
    {OperatorKind::kHex2Int, "hex2int"},    {OperatorKind::kModulus, "modulus"},
    {OperatorKind::kVocabGen, "vocab_gen"}, {OperatorKind::kVocabMap, "vocab_map"},
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<OperatorKind> parse_chain(std::string_view text, std::size_t line) {
  std::vector<OperatorKind> chain;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (!item.empty()) {
      const auto op = parse_operator(lower(item));
      if (!op) {
        throw SpecError("line " + std::to_string(line) + ": unknown operator '" +
                        std::string(item) + "'");
      }
      chain.push_back(*op);
    }
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return chain;
}

std::uint64_t parse_count(std::string_view text, std::string_view key, std::size_t line) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw SpecError("line " + std::to_string(line) + ": " + std::string(key) +
                    " expects a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

std::string join_chain(const std::vector<OperatorKind>& chain) {
  std::string out;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (i) out += ", ";
    out += to_string(chain[i]);
  }
  return out;
}

PipelineSpec make_preset(std::string id, std::uint64_t m, bool vocab) {
  PipelineSpec spec;
  spec.id = std::move(id);
  spec.dense_chain = {OperatorKind::kNeg2Zero, OperatorKind::kLogarithm};
  spec.sparse_chain = {OperatorKind::kHex2Int, OperatorKind::kModulus};
  if (vocab) {
    spec.sparse_chain.push_back(OperatorKind::kVocabGen);
    spec.sparse_chain.push_back(OperatorKind::kVocabMap);
  }
  spec.params.modulus = m;
  spec.stateful = vocab;
  return spec;
}

}  // namespace

std::string_view to_string(OperatorKind op) {
  for (const auto& n : kOperatorNames) {
    if (n.op == op) return n.name;
  }
  return "unknown";
}

std::optional<OperatorKind> parse_operator(std::string_view name) {
  for (const auto& n : kOperatorNames) {
    if (n.name == name) return n.op;
  }
  return std::nullopt;
}

bool is_dense_operator(OperatorKind op) {
  return op == OperatorKind::kNeg2Zero || op == OperatorKind::kLogarithm;
}

bool PipelineSpec::has(OperatorKind op) const {
  return std::find(dense_chain.begin(), dense_chain.end(), op) != dense_chain.end() ||
         std::find(sparse_chain.begin(), sparse_chain.end(), op) != sparse_chain.end();
}

void PipelineSpec::validate() const {
  for (auto op : dense_chain) {
    if (!is_dense_operator(op)) {
      throw SpecError("operator " + std::string(to_string(op)) +
                      " does not apply to dense columns");
    }
  }
  // Sparse chain: hex2int [modulus [vocab_gen vocab_map]], each stage optional
  // only as a suffix. The stage index must strictly increase.
  int stage = -1;
  for (std::size_t i = 0; i < sparse_chain.size(); ++i) {
    const auto op = sparse_chain[i];
    int s;
    switch (op) {
      case OperatorKind::kHex2Int: s = 0; break;
      case OperatorKind::kModulus: s = 1; break;
      case OperatorKind::kVocabGen: s = 2; break;
      case OperatorKind::kVocabMap: s = 3; break;
      default:
        throw SpecError("operator " + std::string(to_string(op)) +
                        " does not apply to sparse columns");
    }
    if (s != stage + 1) {
      if (s <= stage) {
        throw SpecError("misordered chain: " + std::string(to_string(op)) + " at position " +
                        std::to_string(i) + " repeats or precedes an earlier stage");
      }
      const char* missing[] = {"hex2int", "modulus", "vocab_gen", "vocab_map"};
      throw SpecError("misordered chain: " + std::string(to_string(op)) + " requires " +
                      missing[stage + 1] + " before it");
    }
    stage = s;
  }
  if (stage == 2) {
    throw SpecError("misordered chain: vocab_gen must be followed by vocab_map");
  }
  if ((has(OperatorKind::kModulus) || has(OperatorKind::kVocabGen)) && params.modulus == 0) {
    throw SpecError("modulus parameter missing for modulus/vocab operators");
  }
  if (params.token_width < 1 || params.token_width > kMaxTokenWidth) {
    throw SpecError("token_width must be in [1, 16]");
  }
  if (params.modulus > 0 && has(OperatorKind::kVocabGen) && params.modulus > (1ull << 32)) {
    throw SpecError("vocabulary modulus above 2^32 cannot be indexed by 32-bit indices");
  }
  if (stateful != has(OperatorKind::kVocabGen)) {
    throw SpecError("stateful flag inconsistent with the operator chain");
  }
}

SparseKind PipelineSpec::output_kind() const {
  if (sparse_chain.empty()) return SparseKind::kHexToken;
  return sparse_chain.back() == OperatorKind::kVocabMap ? SparseKind::kIndex32
                                                        : SparseKind::kValue64;
}

ColumnFileHeader PipelineSpec::output_header(const ColumnFileHeader& input) const {
  if (input.sparse_kind != SparseKind::kHexToken) {
    throw SpecError("pipeline input must carry raw hex tokens, got " +
                    std::string(to_string(input.sparse_kind)));
  }
  if (input.sparse_count > 0 && !sparse_chain.empty() &&
      input.sparse_token_width != params.token_width) {
    throw SpecError("input token width " + std::to_string(input.sparse_token_width) +
                    " does not match pipeline token_width " +
                    std::to_string(params.token_width));
  }
  ColumnFileHeader out = input;
  out.sparse_kind = output_kind();
  return out;
}

std::string PipelineSpec::to_text() const {
  std::ostringstream os;
  os << "id = " << id << "\n";
  os << "dense = " << join_chain(dense_chain) << "\n";
  os << "sparse = " << join_chain(sparse_chain) << "\n";
  if (params.modulus) os << "modulus = " << params.modulus << "\n";
  os << "token_width = " << params.token_width << "\n";
  return os.str();
}

std::vector<std::string> preset_names() { return {"P-I", "P-II", "P-III"}; }

std::optional<PipelineSpec> preset(std::string_view name) {
  if (name == "P-I") return make_preset("P-I", kSmallVocab, false);
  if (name == "P-II") return make_preset("P-II", kSmallVocab, true);
  if (name == "P-III") return make_preset("P-III", kLargeVocab, true);
  return std::nullopt;
}

PipelineSpec compile_spec(std::string_view description) {
  const auto whole = trim(description);
  if (whole.find('=') == std::string_view::npos && whole.find('\n') == std::string_view::npos) {
    if (auto p = preset(whole)) return *p;
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw SpecError("unknown pipeline preset '" + std::string(whole) + "' (valid: " + names +
                    ")");
  }

  PipelineSpec spec;
  spec.id = "custom";
  std::size_t line_no = 0;
  std::string_view rest = description;
  while (!rest.empty()) {
    ++line_no;
    const auto nl = rest.find('\n');
    auto line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw SpecError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = lower(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    if (key == "preset") {
      auto p = preset(value);
      if (!p) throw SpecError("line " + std::to_string(line_no) + ": unknown preset '" +
                              std::string(value) + "'");
      spec = *p;
    } else if (key == "id") {
      spec.id = std::string(value);
    } else if (key == "dense") {
      spec.dense_chain = parse_chain(value, line_no);
    } else if (key == "sparse") {
      spec.sparse_chain = parse_chain(value, line_no);
    } else if (key == "modulus") {
      spec.params.modulus = parse_count(value, key, line_no);
      if (spec.params.modulus == 0) {
        throw SpecError("line " + std::to_string(line_no) + ": modulus must be >= 1");
      }
    } else if (key == "token_width") {
      spec.params.token_width = static_cast<unsigned>(parse_count(value, key, line_no));
    } else {
      throw SpecError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  spec.stateful = spec.has(OperatorKind::kVocabGen) || spec.has(OperatorKind::kVocabMap);
  spec.validate();
  return spec;
}

}  // namespace minipipe
