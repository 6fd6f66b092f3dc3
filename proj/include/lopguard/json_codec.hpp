#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "lopguard/geometry.hpp"
#include "lopguard/scene.hpp"

// Shared JSON field codecs; errors are SchemaError with a dotted path.
namespace lopguard::jsonc {

const nlohmann::json& require(const nlohmann::json& j, const std::string& key, const std::string& path);
double number(const nlohmann::json& j, const std::string& path);
nlohmann::json box_to_json(const Box3D& b);
Box3D box_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json detection_to_json(const Detection& d);
Detection detection_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json parse_document(std::string_view text);

}  // namespace lopguard::jsonc
