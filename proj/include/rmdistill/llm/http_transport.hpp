#pragma once

#include <string>
#include <utility>
#include <vector>

#include <httplib.h>

#include "rmdistill/llm/client.hpp"

namespace rmd::llm {

/// cpp-httplib transport. A fresh connection per request keeps it reentrant.
class HttplibTransport : public Transport {
public:
    explicit HttplibTransport(int timeout_seconds = 600) : timeout_seconds_(timeout_seconds) {}

    HttpResponse post(const ParsedUrl& url, const std::string& path, const std::string& body,
                      const std::vector<std::pair<std::string, std::string>>& headers) override {
        const std::string origin = url.scheme + "://" + url.host + ":" + std::to_string(url.port);
        httplib::Client cli(origin);
        cli.set_connection_timeout(30);
        cli.set_read_timeout(timeout_seconds_);
        cli.set_write_timeout(60);
        httplib::Headers h;
        std::string content_type = "application/json";
        for (const auto& [k, v] : headers) {
            if (k == "Content-Type") content_type = v;
            else h.emplace(k, v);
        }
        auto res = cli.Post(path, h, body, content_type);
        if (!res) throw TransportFailure("POST " + origin + path + ": " + httplib::to_string(res.error()));
        return {res->status, res->body};
    }

private:
    int timeout_seconds_;
};

} // namespace rmd::llm
