#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmg/corpus.hpp"
#include "lmg/error.hpp"
#include "lmg/rng.hpp"

namespace lmg {

/// Explicit per-token features: is_capitalized, is_digit, is_first, is_last,
/// then a one-hot POS block (all zeros when the corpus has no tags).
inline constexpr std::size_t kBasicWordFeatures = 4;
inline constexpr std::size_t kPhiDim = kBasicWordFeatures + kUniversalPosTags.size();

/// Per-character channels: one-hot id plus is_digit, is_alpha, is_upper, is_punct.
inline constexpr std::size_t kCharChannels = kCharVocabSize + 4;

struct ModelConfig {
  std::vector<std::size_t> char_filter_sizes{2, 4, 8, 16};
  std::size_t char_feature_dim = 16;
  std::size_t word_embed_dim = 300;
  std::size_t encoder_hidden = 200;  // per direction
  std::size_t decoder_hidden = 256;
  std::size_t attention_dim = 128;
  double dropout_in = 0.2;
  double dropout_out = 0.5;
  int epochs = 50;
  std::size_t max_decode_len = 40;
  double lr_initial = 0.001;
  double lr_decay_rate = 0.99;
  double lr_decay_steps = 1000.0;
  double init_scale = 0.08;
  std::uint64_t embedding_seed = 7;

  std::size_t phi_dim() const { return kPhiDim; }
  std::size_t filters_per_size() const { return char_feature_dim / char_filter_sizes.size(); }
  std::size_t encoder_input_dim() const { return char_feature_dim + word_embed_dim; }
  std::size_t encoder_output_dim() const { return 2 * encoder_hidden; }
  /// Width of [w_i, e_i, phi_i], the attended token representation.
  std::size_t context_dim() const { return word_embed_dim + encoder_output_dim() + phi_dim(); }
  /// Width of [e_i, phi_i].
  std::size_t key_dim() const { return encoder_output_dim() + phi_dim(); }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ValidationError(std::string("config: ") + name + " must be positive");
    };
    if (char_filter_sizes.empty()) throw ValidationError("config: char_filter_sizes must not be empty");
    for (auto w : char_filter_sizes) positive(w, "char filter size");
    positive(char_feature_dim, "char_feature_dim");
    if (char_feature_dim % char_filter_sizes.size() != 0) {
      throw ValidationError("config: char_feature_dim must be a multiple of the number of filter sizes");
    }
    positive(word_embed_dim, "word_embed_dim");
    positive(encoder_hidden, "encoder_hidden");
    positive(decoder_hidden, "decoder_hidden");
    positive(attention_dim, "attention_dim");
    positive(max_decode_len, "max_decode_len");
    if (epochs <= 0) throw ValidationError("config: epochs must be positive");
    for (double p : {dropout_in, dropout_out}) {
      if (p < 0.0 || p >= 1.0) throw ValidationError("config: dropout must be in [0, 1)");
    }
    if (!(lr_initial > 0.0) || !(lr_decay_rate > 0.0) || !(lr_decay_steps > 0.0)) {
      throw ValidationError("config: learning-rate schedule values must be positive");
    }
  }

  /// Every key, stringified; also the config-file vocabulary.
  std::map<std::string, std::string> to_map() const {
    std::map<std::string, std::string> m;
    std::string sizes;
    for (std::size_t i = 0; i < char_filter_sizes.size(); ++i) {
      sizes += (i ? "," : "") + std::to_string(char_filter_sizes[i]);
    }
    auto num = [](double d) {
      // Shortest text that reads back to the same double.
      char buf[32];
      const auto r = std::to_chars(buf, buf + sizeof buf, d);
      return std::string(buf, r.ptr);
    };
    m["char_filter_sizes"] = sizes;
    m["char_feature_dim"] = std::to_string(char_feature_dim);
    m["word_embed_dim"] = std::to_string(word_embed_dim);
    m["encoder_hidden"] = std::to_string(encoder_hidden);
    m["decoder_hidden"] = std::to_string(decoder_hidden);
    m["attention_dim"] = std::to_string(attention_dim);
    m["dropout_in"] = num(dropout_in);
    m["dropout_out"] = num(dropout_out);
    m["epochs"] = std::to_string(epochs);
    m["max_decode_len"] = std::to_string(max_decode_len);
    m["lr_initial"] = num(lr_initial);
    m["lr_decay_rate"] = num(lr_decay_rate);
    m["lr_decay_steps"] = num(lr_decay_steps);
    m["init_scale"] = num(init_scale);
    m["embedding_seed"] = std::to_string(embedding_seed);
    return m;
  }

  /// Applies one `key = value` override; unknown keys are an error.
  void set(const std::string& key, const std::string& value) {
    try {
      if (key == "char_filter_sizes") {
        char_filter_sizes.clear();
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, ',')) char_filter_sizes.push_back(std::stoul(part));
      } else if (key == "char_feature_dim") {
        char_feature_dim = std::stoul(value);
      } else if (key == "word_embed_dim") {
        word_embed_dim = std::stoul(value);
      } else if (key == "encoder_hidden") {
        encoder_hidden = std::stoul(value);
      } else if (key == "decoder_hidden") {
        decoder_hidden = std::stoul(value);
      } else if (key == "attention_dim") {
        attention_dim = std::stoul(value);
      } else if (key == "dropout_in") {
        dropout_in = std::stod(value);
      } else if (key == "dropout_out") {
        dropout_out = std::stod(value);
      } else if (key == "epochs") {
        epochs = std::stoi(value);
      } else if (key == "max_decode_len") {
        max_decode_len = std::stoul(value);
      } else if (key == "lr_initial") {
        lr_initial = std::stod(value);
      } else if (key == "lr_decay_rate") {
        lr_decay_rate = std::stod(value);
      } else if (key == "lr_decay_steps") {
        lr_decay_steps = std::stod(value);
      } else if (key == "init_scale") {
        init_scale = std::stod(value);
      } else if (key == "embedding_seed") {
        embedding_seed = std::stoull(value);
      } else {
        throw ParseError("unknown config key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ParseError("bad value '" + value + "' for config key '" + key + "'");
    }
  }

  /// Hash of the fields that determine parameter shapes.
  std::string architecture_hash() const {
    std::string key = "filters=";
    for (auto w : char_filter_sizes) key += std::to_string(w) + ",";
    key += ";char=" + std::to_string(char_feature_dim) + ";embed=" + std::to_string(word_embed_dim) +
           ";enc=" + std::to_string(encoder_hidden) + ";dec=" + std::to_string(decoder_hidden) +
           ";att=" + std::to_string(attention_dim) + ";phi=" + std::to_string(phi_dim());
    std::ostringstream os;
    os << std::hex << fnv1a(key);
    return os.str();
  }

  /// Tiny configuration used for gradient checks: every width is 4.
  static ModelConfig width4() {
    ModelConfig c;
    c.char_filter_sizes = {2, 4};
    c.char_feature_dim = 4;
    c.word_embed_dim = 4;
    c.encoder_hidden = 4;
    c.decoder_hidden = 4;
    c.attention_dim = 4;
    c.max_decode_len = 6;
    return c;
  }
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Flat `key = value` text; `#` starts a comment.
inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

inline std::map<std::string, std::string> load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  return parse_key_values(in, path);
}

inline std::string format_key_values(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

}  // namespace lmg
