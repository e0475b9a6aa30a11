import { boot } from "./app.js";

const root = document.getElementById("chat-root");
if (root) {
  void boot(root);
}
