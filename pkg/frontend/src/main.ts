import { ApiClient } from "./api.js";
import { ConsoleApp } from "./app.js";

const token = new URLSearchParams(window.location.search).get("token") ?? "";
const app = new ConsoleApp(new ApiClient("", token), document);
app.wire();
app.refreshGroups();
