#pragma once

// JSON front end for CLI11 config files. Keys mirror long flag names; nested
// objects become dotted sections. Parse errors carry nlohmann's line/column.

#include <CLI11.hpp>
#include <json.hpp>

namespace poolnet::cli {

class JsonConfig : public CLI::Config {
public:
  /// Subcommand that flat keys belong to.
  std::string section;

  std::string to_config(const CLI::App *app, bool default_also, bool, std::string) const override {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option *opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable())
        continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto &results = opt->results();
        if (opt->get_type_size() == 0)
          j[name] = opt->as<bool>();
        else if (opt->get_items_expected_max() > 1)
          j[name] = results;
        else
          j[name] = results.front();
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream &input) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(input, nullptr, true, true);
    } catch (const nlohmann::json::parse_error &e) {
      throw CLI::ConversionError("config: " + std::string(e.what()));
    }
    if (!j.is_object())
      throw CLI::ConversionError("config: top level must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, section.empty() ? std::vector<std::string>{} : std::vector<std::string>{section}, items);
    return items;
  }

private:
  static std::string scalar(const nlohmann::json &v) {
    if (v.is_string())
      return v.get<std::string>();
    if (v.is_boolean())
      return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const nlohmann::json &j, const std::vector<std::string> &parents,
                      std::vector<CLI::ConfigItem> &out) {
    for (const auto &[key, value] : j.items()) {
      if (value.is_object()) {
        auto sub = parents;
        sub.push_back(key);
        collect(value, sub, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto &v : value)
          item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

} // namespace poolnet::cli
