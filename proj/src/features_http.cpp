// HttpEmbeddingProvider lives in its own TU: httplib is a heavy header.

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "tgl/errors.hpp"
#include "tgl/features.hpp"

namespace tgl::features {

using nlohmann::json;

std::vector<std::vector<float>> HttpEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
  httplib::Client client(opt_.base_url);
  client.set_read_timeout(60, 0);
  httplib::Headers headers;
  if (!opt_.api_key_env.empty()) {
    if (const char* key = std::getenv(opt_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  const size_t batch = opt_.batch_size > 0 ? static_cast<size_t>(opt_.batch_size) : 32;
  for (size_t begin = 0; begin < texts.size(); begin += batch) {
    const size_t end = std::min(texts.size(), begin + batch);
    json body;
    body["texts"] = std::vector<std::string>(texts.begin() + begin, texts.begin() + end);
    auto res = client.Post("/embed", headers, body.dump(), "application/json");
    if (!res) throw DataError("embedding endpoint unreachable: " + opt_.base_url);
    if (res->status != 200)
      throw DataError("embedding endpoint returned HTTP " + std::to_string(res->status));
    json parsed = json::parse(res->body);
    for (const auto& vec : parsed.at("vectors")) {
      out.push_back(vec.get<std::vector<float>>());
      if (static_cast<int64_t>(out.back().size()) != opt_.width)
        throw DataError("embedding endpoint returned wrong vector width");
    }
  }
  if (out.size() != texts.size())
    throw DataError("embedding endpoint returned wrong vector count");
  return out;
}

}  // namespace tgl::features
