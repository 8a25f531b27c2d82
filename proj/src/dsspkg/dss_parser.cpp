#include "gridmcp/dsspkg/dss.hpp"

#include "gridmcp/error.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace gridmcp::dss {

namespace {

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

[[noreturn]] void syntax(const std::string& source, int line, const std::string& msg)
{
    throw Error(ErrorCode::SyntaxError, source + ":" + std::to_string(line) + ": " + msg);
}

bool is_open(char c) { return c == '[' || c == '(' || c == '{'; }
bool is_close(char c) { return c == ']' || c == ')' || c == '}'; }

/// Removes a trailing "!" or "//" comment that is not inside quotes or brackets.
std::string_view strip_comment(std::string_view line)
{
    int depth = 0;
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quote != 0) {
            if (c == quote) {
                quote = 0;
            }
            continue;
        }
        if (c == '"' || c == '\'') {
            quote = c;
        } else if (is_open(c)) {
            ++depth;
        } else if (is_close(c)) {
            --depth;
        } else if (depth == 0 && (c == '!' || (c == '/' && i + 1 < line.size() && line[i + 1] == '/'))) {
            return line.substr(0, i);
        }
    }
    return line;
}

std::vector<std::string> tokenize(std::string_view stmt, const std::string& source, int line)
{
    std::vector<std::string> raw;
    std::string current;
    int depth = 0;
    char quote = 0;
    auto flush = [&] {
        if (!current.empty()) {
            raw.push_back(current);
            current.clear();
        }
    };
    for (char c : stmt) {
        if (quote != 0) {
            current.push_back(c);
            if (c == quote) {
                quote = 0;
            }
            continue;
        }
        if (c == '"' || c == '\'') {
            quote = c;
            current.push_back(c);
        } else if (is_open(c)) {
            ++depth;
            current.push_back(c);
        } else if (is_close(c)) {
            if (--depth < 0) {
                syntax(source, line, "unbalanced closing bracket");
            }
            current.push_back(c);
        } else if (depth == 0 && std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (depth == 0 && c == '=') {
            flush();
            raw.emplace_back("=");
        } else {
            current.push_back(c);
        }
    }
    if (quote != 0) {
        syntax(source, line, "unterminated quote");
    }
    if (depth != 0) {
        syntax(source, line, "unbalanced bracket");
    }
    flush();

    // Glue "key", "=", "value" back together.
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == "=") {
            if (tokens.empty() || i + 1 >= raw.size() || raw[i + 1] == "=") {
                syntax(source, line, "dangling '='");
            }
            tokens.back() += "=" + raw[++i];
        } else {
            tokens.push_back(raw[i]);
        }
    }
    return tokens;
}

std::optional<DirectiveKind> element_kind(std::string_view type)
{
    static const std::pair<std::string_view, DirectiveKind> table[] = {
        {"circuit", DirectiveKind::Circuit},         {"line", DirectiveKind::Line},
        {"linecode", DirectiveKind::LineCode},       {"load", DirectiveKind::Load},
        {"capacitor", DirectiveKind::Capacitor},     {"reactor", DirectiveKind::Reactor},
        {"transformer", DirectiveKind::Transformer}, {"regcontrol", DirectiveKind::RegControl},
        {"loadshape", DirectiveKind::LoadShape},
    };
    for (const auto& [name, kind] : table) {
        if (name == type) {
            return kind;
        }
    }
    return std::nullopt;
}

struct ParserState {
    const RedirectResolver& resolver;
    ParseOutput out;
    std::set<std::string> linecodes;
    bool unexpanded_redirect = false;
    int depth = 0;
};

void parse_into(ParserState& st, std::string_view text, const std::string& source);

void handle_statement(ParserState& st, const std::vector<std::string>& tokens, const std::string& source, int line)
{
    const std::string command = lower(tokens.front());
    auto properties = [&](std::size_t first, Directive& d) {
        for (std::size_t i = first; i < tokens.size(); ++i) {
            auto eq = tokens[i].find('=');
            if (eq == std::string::npos) {
                st.out.warnings.push_back(source + ":" + std::to_string(line) + ": positional value '" + tokens[i] +
                                          "' ignored");
                continue;
            }
            auto key = lower(trim(std::string_view(tokens[i]).substr(0, eq)));
            if (key.empty()) {
                syntax(source, line, "property without a name");
            }
            d.properties.emplace_back(std::move(key), tokens[i].substr(eq + 1));
        }
    };

    if (command == "new") {
        if (tokens.size() < 2) {
            syntax(source, line, "'New' needs an element as Type.Name");
        }
        std::string object = tokens[1];
        if (lower(object.substr(0, std::min<std::size_t>(7, object.size()))) == "object=") {
            object = object.substr(7);
        }
        auto dot = object.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == object.size()) {
            syntax(source, line, "expected Type.Name, got '" + object + "'");
        }
        auto kind = element_kind(lower(object.substr(0, dot)));
        if (!kind) {
            st.out.warnings.push_back(source + ":" + std::to_string(line) + ": unsupported element type '" +
                                      object.substr(0, dot) + "' skipped");
            return;
        }
        Directive d;
        d.kind = *kind;
        d.name = lower(object.substr(dot + 1));
        d.source = source;
        d.line = line;
        properties(2, d);
        if (d.kind == DirectiveKind::LineCode) {
            st.linecodes.insert(d.name);
        }
        if (d.kind == DirectiveKind::Line) {
            if (auto code = d.get("linecode")) {
                if (st.linecodes.count(lower(*code)) == 0 && !st.unexpanded_redirect) {
                    throw Error(ErrorCode::UndefinedLineCode, source + ":" + std::to_string(line) +
                                                                  ": line '" + d.name + "' uses undefined linecode '" +
                                                                  *code + "'");
                }
            }
        }
        st.out.directives.push_back(std::move(d));
    } else if (command == "redirect" || command == "compile") {
        if (tokens.size() != 2) {
            syntax(source, line, "'Redirect' takes exactly one file name");
        }
        std::string file = tokens[1];
        if (file.size() >= 2 && (file.front() == '"' || file.front() == '\'') && file.back() == file.front()) {
            file = file.substr(1, file.size() - 2);
        }
        if (!st.resolver) {
            st.unexpanded_redirect = true;
            st.out.directives.push_back(Directive{DirectiveKind::Redirect, file, {}, source, line});
            return;
        }
        auto text = st.resolver(file);
        if (!text) {
            throw Error(ErrorCode::UnresolvedRedirect,
                        source + ":" + std::to_string(line) + ": cannot resolve redirect '" + file + "'");
        }
        if (++st.depth > 16) {
            throw Error(ErrorCode::UnresolvedRedirect, "redirect nesting deeper than 16 levels at '" + file + "'");
        }
        parse_into(st, *text, file);
        --st.depth;
    } else if (command == "set" || command == "solve") {
        Directive d;
        d.kind = command == "set" ? DirectiveKind::Set : DirectiveKind::Solve;
        d.source = source;
        d.line = line;
        properties(1, d);
        st.out.directives.push_back(std::move(d));
    } else {
        st.out.warnings.push_back(source + ":" + std::to_string(line) + ": unsupported directive '" + tokens.front() +
                                  "' skipped");
    }
}

void parse_into(ParserState& st, std::string_view text, const std::string& source)
{
    std::string statement;
    int statement_line = 0;
    int line_no = 0;
    bool in_block_comment = false;
    auto finish = [&] {
        if (!trim(statement).empty()) {
            auto tokens = tokenize(statement, source, statement_line);
            if (!tokens.empty()) {
                handle_statement(st, tokens, source, statement_line);
            }
        }
        statement.clear();
    };

    while (!text.empty() || line_no == 0) {
        auto eol = text.find('\n');
        std::string_view raw = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') {
            raw.remove_suffix(1);
        }
        auto line = trim(raw);
        if (in_block_comment) {
            if (line.find("*/") != std::string_view::npos) {
                in_block_comment = false;
            }
            continue;
        }
        if (line.substr(0, 2) == "/*") {
            in_block_comment = line.find("*/", 2) == std::string_view::npos;
            continue;
        }
        line = trim(strip_comment(line));
        if (line.empty()) {
            if (text.empty()) {
                break;
            }
            continue;
        }
        if (line.front() == '~') {
            if (statement.empty()) {
                syntax(source, line_no, "continuation line without a statement");
            }
            statement += ' ';
            statement += line.substr(1);
            continue;
        }
        finish();
        statement = std::string(line);
        statement_line = line_no;
    }
    finish();
}

} // namespace

std::string_view to_string(DirectiveKind kind) noexcept
{
    switch (kind) {
    case DirectiveKind::Circuit: return "Circuit";
    case DirectiveKind::Line: return "Line";
    case DirectiveKind::LineCode: return "LineCode";
    case DirectiveKind::Load: return "Load";
    case DirectiveKind::Capacitor: return "Capacitor";
    case DirectiveKind::Reactor: return "Reactor";
    case DirectiveKind::Transformer: return "Transformer";
    case DirectiveKind::RegControl: return "RegControl";
    case DirectiveKind::LoadShape: return "LoadShape";
    case DirectiveKind::Redirect: return "Redirect";
    case DirectiveKind::Set: return "Set";
    case DirectiveKind::Solve: return "Solve";
    }
    return "?";
}

std::optional<std::string> Directive::get(std::string_view key) const
{
    for (auto it = properties.rbegin(); it != properties.rend(); ++it) {
        if (it->first == key) {
            return it->second;
        }
    }
    return std::nullopt;
}

bool Directive::same_content(const Directive& other) const
{
    return kind == other.kind && name == other.name && properties == other.properties;
}

ParseOutput parse_dss_subset(std::string_view text, const std::string& source, const RedirectResolver& resolver)
{
    ParserState st{resolver, {}, {}, false, 0};
    parse_into(st, text, source);
    return std::move(st.out);
}

std::string emit_dss(const std::vector<Directive>& directives)
{
    std::string out;
    for (const auto& d : directives) {
        switch (d.kind) {
        case DirectiveKind::Redirect:
            out += "Redirect " + d.name;
            break;
        case DirectiveKind::Set:
            out += "Set";
            break;
        case DirectiveKind::Solve:
            out += "Solve";
            break;
        default:
            out += "New " + std::string(to_string(d.kind)) + "." + d.name;
            break;
        }
        for (const auto& [k, v] : d.properties) {
            out += " " + k + "=" + v;
        }
        out += "\n";
    }
    return out;
}

} // namespace gridmcp::dss
