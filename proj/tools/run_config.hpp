#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ftp/model/config.hpp"
#include "ftp/training/optimizer.hpp"

namespace ftp::cli {

enum class KeyType { text, integer, real };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string fallback;
  std::string help;
};

// Every key a command may read, with its default.
const std::vector<KeySpec>& known_keys();

// key=value settings grouped by section prefix (run., model., train., data.,
// sample., grid., probe.). Unknown keys and values that do not parse as the
// key's type throw ConfigError.
class RunConfig {
 public:
  RunConfig();

  // Lines "key = value"; '#' starts a comment. Later settings win.
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  // "key=value"
  void set_assignment(const std::string& text);

  const std::string& text(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;  // non-negative integer
  double real(const std::string& key) const;
  bool was_set(const std::string& key) const { return explicit_.count(key) > 0; }

  // run.out_dir, else $FTP_OUT_DIR, else "runs".
  std::filesystem::path out_dir() const;

  // Typed JSON object of every key.
  std::string to_json() const;
  void write_resolved(const std::filesystem::path& dir) const;

  model::ModelConfig model_config() const;
  training::TrainConfig train_config() const;

 private:
  const KeySpec& spec(const std::string& key) const;

  std::map<std::string, std::string> values_;
  std::map<std::string, bool> explicit_;
};

}  // namespace ftp::cli
