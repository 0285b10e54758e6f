#include "comt/review_server.hpp"

#include <httplib.h>

#include "comt/errors.hpp"

namespace comt {

namespace {

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Map toolkit errors onto the documented status codes.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    reply(res, 404, {{"error", e.what()}});
  } catch (const ConflictError& e) {
    reply(res, 409, {{"error", e.what()}});
  } catch (const StateError& e) {
    reply(res, 409, {{"error", e.what()}});
  } catch (const ValidationError& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const Json::exception& e) {
    reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

std::string reviewer_of(const httplib::Request& req, const Json* body) {
  const auto header = req.get_header_value(kReviewerHeader);
  std::string from_body;
  if (body && body->contains("reviewer_id")) {
    if (!(*body)["reviewer_id"].is_string()) throw ValidationError("reviewer_id must be a string");
    from_body = (*body)["reviewer_id"].get<std::string>();
  }
  if (!header.empty() && !from_body.empty() && header != from_body)
    throw ValidationError("reviewer in header and body disagree");
  return header.empty() ? from_body : header;
}

}  // namespace

ReviewServer::ReviewServer(ReviewService& service, ServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

void ReviewServer::install_routes() {
  auto& s = *server_;

  s.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto kind_text = req.get_param_value("kind");
      const auto kind = parse_item_kind(kind_text);
      if (!kind)
        throw ValidationError("unknown queue kind '" + kind_text + "'; allowed: " + allowed_item_kinds());
      std::optional<std::string> cursor;
      if (req.has_param("cursor")) cursor = req.get_param_value("cursor");
      std::optional<std::size_t> limit;
      if (req.has_param("limit")) {
        try {
          limit = static_cast<std::size_t>(std::stoul(req.get_param_value("limit")));
        } catch (const std::exception&) {
          throw ValidationError("limit must be a positive integer");
        }
      }
      const auto page = service_.list_queue(*kind, cursor, limit);
      Json items = Json::array();
      for (const auto& i : page.items) items.push_back(to_json(i));
      reply(res, 200,
            {{"kind", kind_text},
             {"items", items},
             {"next_cursor", page.next_cursor ? Json(*page.next_cursor) : Json(nullptr)}});
    });
  });

  s.Get(R"(/api/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, to_json(service_.get_item(req.matches[1].str()))); });
  });

  s.Post(R"(/api/items/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = Json::parse(req.body);
      if (!body.is_object()) throw ValidationError("body must be a JSON object");
      if (!body.contains("version") || !body["version"].is_number_integer())
        throw ValidationError("body needs an integer 'version'");
      if (!body.contains("decision")) throw ValidationError("body needs a 'decision'");
      const auto item = service_.submit_decision(req.matches[1].str(), body["version"].get<std::int64_t>(),
                                                 body["decision"], reviewer_of(req, &body));
      reply(res, 200, to_json(item));
    });
  });

  s.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, to_json(service_.progress())); });
  });

  s.Post("/api/rounds/advance", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      Json body = Json::object();
      if (!req.body.empty()) body = Json::parse(req.body);
      reply(res, 200, {{"promoted", service_.advance_round(reviewer_of(req, &body))}});
    });
  });

  if (!options_.ui_dir.empty()) s.set_mount_point("/", options_.ui_dir.string());
}

bool ReviewServer::bind(const std::string& host, int port) { return server_->bind_to_port(host, port); }

int ReviewServer::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool ReviewServer::listen_after_bind() { return server_->listen_after_bind(); }

void ReviewServer::stop() {
  if (server_) server_->stop();
}

void ReviewServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace comt
