#include <httplib.h>

#include "xrm/errors.hpp"
#include "xrm/judge.hpp"

namespace xrm {

HttpTransport::HttpTransport(std::string url, std::string api_key,
                             std::chrono::duration<double> timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("judge endpoint '" + url + "' has no scheme");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("judge endpoint scheme must be http or https");
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw ConfigError("built without TLS support; https endpoints unavailable");
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

TransportResponse HttpTransport::post(const std::string& json_body) {
  httplib::Client client(origin_);
  const auto seconds = std::chrono::duration_cast<std::chrono::microseconds>(timeout_);
  client.set_connection_timeout(seconds);
  client.set_read_timeout(seconds);
  client.set_write_timeout(seconds);
  const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  auto res = client.Post(path_, headers, json_body, "application/json");
  TransportResponse out;
  if (!res) {
    out.error = "transport error: " + httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

}  // namespace xrm
