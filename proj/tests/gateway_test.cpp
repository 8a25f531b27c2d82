#include "gridmcp/gateway/gateway.hpp"
#include "gridmcp/error.hpp"

#include "support/temp_dir.hpp"

#include <doctest.h>
#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <thread>

using namespace gridmcp;
using namespace gridmcp::gateway;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kLibrary = GRIDMCP_TEST_LIBRARY_DIR;
constexpr const char* kToken = "test-token";

constexpr const char* kTinyMaster = R"(Clear
New Circuit.tiny basekv=12.47 pu=1.0 phases=3 bus1=sourcebus basekva=1000
New Line.l1 phases=3 bus1=sourcebus bus2=n1 r1=1.0 x1=2.0 r0=1.0 x0=2.0 length=1 units=none
New Line.l2 phases=3 bus1=n1 bus2=n2 r1=0.5 x1=1.0 r0=0.5 x0=1.0 length=1 units=none
New Load.big bus1=n2 phases=3 conn=wye model=1 kv=12.47 kw=3000 kvar=1500
Set voltagebases=[12.47]
Solve
)";

json tiny_upload()
{
    return {{"name", "tiny"},
            {"files",
             {{"master.dss", kTinyMaster},
              {"manifest.json", R"({"name":"tiny","version":"1.0","description":"three-bus feeder"})"}}}};
}

GatewayConfig config_for(const fs::path& data)
{
    GatewayConfig c;
    c.data_dir = data;
    c.library_root = kLibrary;
    c.token = kToken;
    c.busy_wait = std::chrono::milliseconds(200);
    return c;
}

/// Gateway on an ephemeral port for the lifetime of the object.
struct Running {
    Gateway gw;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit Running(GatewayConfig c) : gw(std::move(c))
    {
        gw.mount(server);
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~Running()
    {
        server.stop();
        thread.join();
    }

    httplib::Client client(const std::string& token = kToken) const
    {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(60, 0);
        if (!token.empty()) {
            c.set_bearer_token_auth(token);
        }
        return c;
    }

    std::pair<int, json> get(const std::string& path) const
    {
        auto r = client().Get(path);
        REQUIRE(r);
        return {r->status, json::parse(r->body, nullptr, false)};
    }
    std::pair<int, json> post(const std::string& path, const json& body) const
    {
        auto r = client().Post(path, body.dump(), "application/json");
        REQUIRE(r);
        return {r->status, json::parse(r->body, nullptr, false)};
    }
    std::string new_session(const json& body = json::object()) const
    {
        auto [status, j] = post("/api/sessions", body);
        REQUIRE(status == 201);
        return j["id"].get<std::string>();
    }
};

std::vector<std::string> trace_tools(const json& reply)
{
    std::vector<std::string> out;
    for (const auto& e : reply["trace"]) {
        out.push_back(e["tool"].get<std::string>());
    }
    return out;
}

} // namespace

TEST_CASE("document store: versions, reopen and blobs")
{
    testing::TempDir dir;
    {
        DocumentStore store(dir.path);
        CHECK(store.put("sessions", "b", {{"x", 1}}) == 1);
        CHECK(store.put("sessions", "a", {{"x", 2}}) == 1);
        CHECK(store.put("sessions", "b", {{"x", 3}}) == 2); // last writer wins
        CHECK(store.get("sessions", "b")->body["x"] == 3);
        const auto all = store.list("sessions");
        REQUIRE(all.size() == 2);
        CHECK(all[0].id == "a");
        CHECK(all[1].version == 2);
        CHECK_FALSE(store.get("sessions", "zzz").has_value());
        CHECK_FALSE(store.get("sessions", "../etc").has_value());
        CHECK_THROWS_AS(store.put("sessions", "../x", json::object()), Error);

        const auto h = store.put_blob("package bytes");
        CHECK(store.put_blob("package bytes") == h);
        CHECK(store.get_blob(h) == "package bytes");
        CHECK(store.remove("sessions", "a"));
    }
    // An interrupted write leaves a temp file behind; reopening drops it.
    dir.write("sessions/.b.json.tmp", "{\"id\":");
    DocumentStore reopened(dir.path);
    CHECK(reopened.warnings().empty());
    CHECK_FALSE(fs::exists(dir.path / "sessions/.b.json.tmp"));
    CHECK(reopened.get("sessions", "b")->version == 2);
    CHECK(reopened.put("sessions", "b", {{"x", 4}}) == 3);
    CHECK_FALSE(reopened.get("sessions", "a").has_value());
}

TEST_CASE("document store: corrupt records are quarantined")
{
    testing::TempDir dir;
    {
        DocumentStore store(dir.path);
        store.put("sessions", "good", {{"ok", true}});
    }
    dir.write("sessions/broken.json", "{not json");
    dir.write("sessions/renamed.json", R"({"id":"other","version":1,"body":{}})");
    DocumentStore store(dir.path);
    REQUIRE(store.warnings().size() == 2);
    for (const auto& w : store.warnings()) {
        CHECK(w.rfind("CorruptRecord", 0) == 0);
    }
    CHECK(fs::exists(dir.path / "quarantine/sessions/broken.json"));
    CHECK(fs::exists(dir.path / "quarantine/sessions/renamed.json"));
    const auto all = store.list("sessions");
    REQUIRE(all.size() == 1);
    CHECK(all[0].id == "good");
}

TEST_CASE("config file and environment overrides")
{
    testing::TempDir dir;
    dir.write("gw.json", R"({"data_dir":"/tmp/a","token":"file","max_rounds":5,
                             "adapter":{"endpoint":"http://127.0.0.1:1","model":"m1","timeout_ms":1500}})");
    ::unsetenv("GRIDMCP_TOKEN");
    auto c = load_gateway_config(dir.path / "gw.json");
    CHECK(c.data_dir == "/tmp/a");
    CHECK(c.token == "file");
    CHECK(c.max_rounds == 5);
    CHECK(c.adapter.model == "m1");
    CHECK(c.adapter.timeout.count() == 1500);
    ::setenv("GRIDMCP_TOKEN", "env", 1);
    ::setenv("GRIDMCP_ADAPTER_MODEL", "m2", 1);
    c = load_gateway_config(dir.path / "gw.json");
    CHECK(c.token == "env");
    CHECK(c.adapter.model == "m2");
    ::unsetenv("GRIDMCP_TOKEN");
    ::unsetenv("GRIDMCP_ADAPTER_MODEL");
    CHECK_THROWS_AS(load_gateway_config(dir.path / "missing.json"), Error);

    GatewayConfig no_token = config_for(dir.path / "data");
    no_token.token.clear();
    CHECK_THROWS_AS(Gateway{no_token}, Error);
}

TEST_CASE("auth, sessions and a scripted voltage question")
{
    testing::TempDir dir;
    Running rt(config_for(dir.path));

    auto anon = rt.client("");
    CHECK(anon.Get("/api/health")->status == 200);
    CHECK(anon.Get("/api/sessions")->status == 401);
    CHECK(rt.client("wrong").Get("/api/sessions")->status == 401);

    const auto id = rt.new_session({{"circuit", "ieee13"}});
    CHECK(rt.get("/api/sessions/nope").first == 404);
    CHECK(rt.post("/api/sessions/nope/messages", {{"text", "hi"}}).first == 404);
    CHECK(rt.post("/api/sessions/" + id + "/messages", json::object()).first == 422);
    auto bad = rt.client().Post("/api/sessions/" + id + "/messages", "{", "application/json");
    CHECK(bad->status == 400);

    auto [status, reply] = rt.post("/api/sessions/" + id + "/messages", {{"text", "What are the bus voltages?"}});
    REQUIRE(status == 200);
    CHECK(reply["status"] == "completed");
    CHECK(trace_tools(reply) == std::vector<std::string>{"solve_power_flow", "get_all_bus_voltages"});

    // The final text cites the values the solve returned.
    const auto& solved = reply["trace"][0]["envelope"]["data"];
    const auto text = reply["final_text"].get<std::string>();
    CHECK(text.find(solved["min_voltage"]["bus"].get<std::string>()) != std::string::npos);
    CHECK(text.find("{{") == std::string::npos);

    auto [s2, session] = rt.get("/api/sessions/" + id);
    REQUIRE(s2 == 200);
    CHECK(session["turns"].size() == 6); // user, 2 x (call, result), final
    CHECK(session["traces"].size() == 1);
    CHECK(session["circuit"] == "ieee13");

    auto [s3, list] = rt.get("/api/sessions");
    CHECK(s3 == 200);
    REQUIRE(list["count"] == 1);
    CHECK(list["sessions"][0]["turn_count"] == 6);

    auto [s4, providers] = rt.get("/api/providers");
    CHECK(s4 == 200);
    CHECK(providers["providers"][0]["name"] == "scripted");
    CHECK(providers["providers"][1]["available"] == false);
    auto [s5, profiles] = rt.get("/api/profiles");
    CHECK(s5 == 200);
    CHECK(profiles["count"].get<int>() > 0);
}

TEST_CASE("explicit script, qsts and export routes")
{
    testing::TempDir dir;
    Running rt(config_for(dir.path));
    const auto id = rt.new_session({{"circuit", "ieee13"}});

    auto [none, err] = rt.get("/api/sessions/" + id + "/qsts");
    CHECK(none == 422);
    CHECK(err["error"]["code"] == "NoQstsResult");
    CHECK(err.contains("hint"));

    auto [status, reply] = rt.post("/api/sessions/" + id + "/messages", {{"text", "run a daily time series"}});
    REQUIRE(status == 200);
    CHECK(trace_tools(reply) == std::vector<std::string>{"run_qsts"});

    auto [sq, qsts] = rt.get("/api/sessions/" + id + "/qsts");
    CHECK(sq == 200);
    CHECK(qsts.contains("violations"));
    auto csv = rt.client().Get("/api/sessions/" + id + "/export?format=csv");
    REQUIRE(csv);
    CHECK(csv->status == 200);
    CHECK(csv->get_header_value("Content-Type") == "text/csv");
    CHECK_FALSE(csv->body.empty());
    CHECK(rt.get("/api/sessions/" + id + "/export?format=xml").first == 422);

    auto [st, topo] = rt.get("/api/sessions/" + id + "/topology");
    CHECK(st == 200);
    CHECK(topo["nodes"].size() == 15);

    const json script = json::array({{{"tool_calls", json::array({{{"tool", "get_bus_voltage"},
                                                                    {"args", {{"bus", "675"}}}}})}},
                                     "675 is at {{get_bus_voltage/data/per_unit}}"});
    auto [s2, r2] = rt.post("/api/sessions/" + id + "/messages", {{"text", "675?"}, {"script", script}});
    CHECK(s2 == 200);
    CHECK(trace_tools(r2) == std::vector<std::string>{"get_bus_voltage"});
    CHECK(rt.post("/api/sessions/" + id + "/messages", {{"text", "x"}, {"script", 5}}).first == 422);
}

TEST_CASE("circuit upload: sanitizing and switching sessions")
{
    testing::TempDir dir;
    Running rt(config_for(dir.path));

    auto escape = tiny_upload();
    escape["files"]["../evil.dss"] = "Clear";
    auto [s1, e1] = rt.post("/api/circuits", escape);
    CHECK(s1 == 422);
    CHECK(e1["error"]["code"] == "PathEscapesWhitelist");
    CHECK(e1["path"] == "../evil.dss");
    CHECK_FALSE(fs::exists(dir.path / "evil.dss"));
    CHECK_FALSE(fs::exists(dir.path / "uploads" / "tiny"));

    auto absolute = tiny_upload();
    absolute["files"]["/tmp/abs.dss"] = "Clear";
    CHECK(rt.post("/api/circuits", absolute).second["error"]["code"] == "PathEscapesWhitelist");
    CHECK(rt.post("/api/circuits", {{"name", "../x"}, {"files", tiny_upload()["files"]}}).first == 422);

    auto broken = tiny_upload();
    broken["files"]["master.dss"] = "New Line.x bus1=a bus2=b linecode=nowhere\n";
    auto [sb, eb] = rt.post("/api/circuits", broken);
    CHECK(sb == 422);
    CHECK(eb["error"]["code"] != "PathEscapesWhitelist");

    auto [s2, up] = rt.post("/api/circuits", tiny_upload());
    REQUIRE(s2 == 201);
    CHECK(up["bus_count"] == 3);
    auto [s3, circuits] = rt.get("/api/circuits");
    CHECK(s3 == 200);
    bool listed = false;
    for (const auto& c : circuits["circuits"]) {
        listed = listed || (c["name"] == "tiny" && c["source"] == "upload");
    }
    CHECK(listed);

    const auto a = rt.new_session({{"circuit", "ieee13"}});
    const auto b = rt.new_session({{"circuit", "tiny"}});
    auto voltages = [&](const std::string& id) {
        auto [status, r] = rt.post("/api/sessions/" + id + "/messages", {{"text", "bus voltages please"}});
        REQUIRE(status == 200);
        return r["trace"][1]["envelope"]["data"]["voltages"];
    };
    CHECK(voltages(a).contains("675"));
    CHECK(voltages(b).contains("n2"));
    CHECK(voltages(a).contains("675"));
    CHECK(rt.post("/api/sessions", {{"circuit", "nowhere"}}).first == 404);
}

TEST_CASE("busy engine answers 409")
{
    testing::TempDir dir;
    Running rt(config_for(dir.path));
    const auto id = rt.new_session({{"circuit", "ieee13"}});
    auto lease = rt.gw.lease_engine();
    auto [status, body] = rt.post("/api/sessions/" + id + "/messages", {{"text", "voltages"}});
    CHECK(status == 409);
    CHECK(body["error"]["code"] == "EngineBusy");
    lease.unlock();
    CHECK(rt.post("/api/sessions/" + id + "/messages", {{"text", "voltages"}}).first == 200);
}

TEST_CASE("http provider: unavailable endpoint gives 502 and keeps the message")
{
    testing::TempDir dir;
    {
        Running rt(config_for(dir.path / "a"));
        CHECK(rt.post("/api/sessions", {{"provider", "http"}}).first == 422);
        CHECK(rt.post("/api/sessions", {{"provider", "carrier-pigeon"}}).first == 422);
    }
    auto c = config_for(dir.path / "b");
    c.adapter.endpoint = "http://127.0.0.1:9"; // discard port, nothing listens
    c.adapter.model = "m";
    c.adapter.timeout = std::chrono::milliseconds(500);
    Running rt(c);
    const auto id = rt.new_session({{"provider", "http"}, {"circuit", "ieee13"}});
    auto [status, body] = rt.post("/api/sessions/" + id + "/messages", {{"text", "voltages?"}});
    CHECK(status == 502);
    CHECK(body["status"] == "adapter_unavailable");
    auto [s2, session] = rt.get("/api/sessions/" + id);
    REQUIRE(session["turns"].size() == 1);
    CHECK(session["turns"][0]["text"] == "voltages?");
}

TEST_CASE("state survives a restart")
{
    testing::TempDir dir;
    std::string id;
    const json shape_script = json::array(
        {{{"tool_calls",
           json::array({{{"tool", "create_loadshape"},
                         {"args", {{"name", "flat_half"}, {"multipliers", std::vector<double>(24, 0.5)}}}}})}},
         "created"});
    {
        Running rt(config_for(dir.path));
        REQUIRE(rt.post("/api/circuits", tiny_upload()).first == 201);
        id = rt.new_session({{"circuit", "tiny"}});
        CHECK(rt.post("/api/sessions/" + id + "/messages", {{"text", "make a shape"}, {"script", shape_script}})
                  .first
              == 200);
        CHECK(rt.post("/api/sessions/" + id + "/messages", {{"text", "voltages"}}).first == 200);
    }
    CHECK(fs::exists(dir.path / "shapes/flat_half.json"));
    fs::remove_all(dir.path / "uploads"); // rebuilt from the stored blob

    Running rt(config_for(dir.path));
    auto [status, session] = rt.get("/api/sessions/" + id);
    REQUIRE(status == 200);
    CHECK(session["turns"].size() == 10);
    CHECK(session["traces"].size() == 2);
    CHECK(session["version"] == 3);
    CHECK(fs::exists(dir.path / "uploads/tiny/master.dss"));

    const json check = json::array(
        {{{"tool_calls", json::array({{{"tool", "get_loadshape"}, {"args", {{"name", "flat_half"}}}}})}}, "ok"});
    auto [s2, r2] = rt.post("/api/sessions/" + id + "/messages", {{"text", "shape?"}, {"script", check}});
    REQUIRE(s2 == 200);
    CHECK(r2["trace"][0]["envelope"]["success"] == true);
    auto [s3, r3] = rt.post("/api/sessions/" + id + "/messages", {{"text", "voltages"}});
    REQUIRE(s3 == 200);
    CHECK(r3["trace"][1]["envelope"]["data"]["voltages"].contains("n2"));
}

TEST_CASE("session profile is applied on activation")
{
    testing::TempDir dir;
    Running rt(config_for(dir.path));
    auto [sp, profiles] = rt.get("/api/profiles");
    REQUIRE(sp == 200);
    const auto profile = profiles["profiles"][0]["name"].get<std::string>();
    const auto id = rt.new_session({{"circuit", "ieee13"}, {"profile", profile}});
    const json script = json::array(
        {{{"tool_calls", json::array({{{"tool", "get_loadshape"}, {"args", {{"name", profile}}}}})}}, "ok"});
    auto [status, r] = rt.post("/api/sessions/" + id + "/messages", {{"text", "which loads?"}, {"script", script}});
    REQUIRE(status == 200);
    CHECK_FALSE(r["trace"][0]["envelope"]["data"]["assigned_loads"].empty());
    CHECK(rt.post("/api/sessions", {{"circuit", "ieee13"}, {"profile", "no_such_profile"}}).first == 422);
}
